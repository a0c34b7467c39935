//! The quotient of the ideal circle by leaves and chains of perfect fits,
//! with the finite checks available on it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::action::{CircleHomeo, GroupAction};
use crate::circle::CirclePoint;
use crate::error::{ForgeError, Result};
use crate::lamination::{AlmostLamination, Leaf, Sign};
use crate::plane::{perfect_fits, sets_linked};
use crate::verify::{UnionFind, Verdict};

/// One class of the quotient, with the endpoints contributed by each family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryClass {
    pub members: Vec<CirclePoint>,
    pub plus_ends: Vec<CirclePoint>,
    pub minus_ends: Vec<CirclePoint>,
}

impl BoundaryClass {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    fn ends(&self, sign: Sign) -> &[CirclePoint] {
        match sign {
            Sign::Plus => &self.plus_ends,
            Sign::Minus => &self.minus_ends,
        }
    }
}

/// Classes with a point lookup. Only points that are leaf endpoints are
/// stored; every other point of the circle is its own class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryClasses {
    pub classes: Vec<BoundaryClass>,
    #[serde(skip)]
    index: BTreeMap<CirclePoint, usize>,
}

impl BoundaryClasses {
    pub fn class_of(&self, p: &CirclePoint) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn class_of_leaf(&self, l: &Leaf) -> Option<usize> {
        self.class_of(l.lo())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Merges the endpoints of every leaf and of leaves joined by a perfect fit.
pub fn boundary_classes(leaves: &[Leaf], fits: &[(Leaf, Leaf)]) -> BoundaryClasses {
    let points: BTreeSet<CirclePoint> = leaves
        .iter()
        .chain(fits.iter().flat_map(|(a, b)| [a, b]))
        .flat_map(|l| l.endpoints().map(|p| p.clone()))
        .collect();
    let ids: BTreeMap<CirclePoint, usize> = points.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let mut uf = UnionFind::new(ids.len());
    for l in leaves {
        uf.union(ids[l.lo()], ids[l.hi()]);
    }
    for (a, b) in fits {
        uf.union(ids[a.lo()], ids[a.hi()]);
        uf.union(ids[b.lo()], ids[b.hi()]);
        uf.union(ids[a.lo()], ids[b.lo()]);
    }
    let mut ends: BTreeMap<(CirclePoint, Sign), ()> = BTreeMap::new();
    for l in leaves.iter().chain(fits.iter().flat_map(|(a, b)| [a, b])) {
        for p in l.endpoints() {
            ends.insert((p.clone(), l.sign()), ());
        }
    }
    let mut by_root: BTreeMap<usize, BoundaryClass> = BTreeMap::new();
    for (p, &i) in &ids {
        let c = by_root.entry(uf.find(i)).or_insert_with(|| BoundaryClass {
            members: Vec::new(),
            plus_ends: Vec::new(),
            minus_ends: Vec::new(),
        });
        c.members.push(p.clone());
        if ends.contains_key(&(p.clone(), Sign::Plus)) {
            c.plus_ends.push(p.clone());
        }
        if ends.contains_key(&(p.clone(), Sign::Minus)) {
            c.minus_ends.push(p.clone());
        }
    }
    let classes: Vec<BoundaryClass> = by_root.into_values().collect();
    let index = classes.iter().enumerate().flat_map(|(i, c)| c.members.iter().map(move |p| (p.clone(), i))).collect();
    BoundaryClasses { classes, index }
}

/// Traces of distinct classes left by the same family must not interleave.
pub fn unlinked_classes_check(classes: &[BoundaryClass], depth: u32) -> Verdict {
    for (i, a) in classes.iter().enumerate() {
        for b in &classes[i + 1..] {
            for sign in [Sign::Plus, Sign::Minus] {
                if let Some(w) = sets_linked(a.ends(sign), b.ends(sign)) {
                    return Verdict::fail(
                        "unlinked classes",
                        json!({"a": a.members, "b": b.members, "sign": sign, "alternating": w}),
                    );
                }
            }
        }
    }
    Verdict::pass("unlinked classes", depth)
}

/// Whether every element maps each class into a single class, as far as
/// the images are enumerated.
pub fn equivariance_check(b: &BoundaryClasses, action: &GroupAction, radius: u32) -> Verdict {
    let ball = action.ball(radius);
    for el in ball.nontrivial() {
        for (i, c) in b.classes.iter().enumerate() {
            let targets: BTreeSet<usize> = c.members.iter().filter_map(|p| b.class_of(&el.map.apply(p))).collect();
            if targets.len() > 1 {
                return Verdict::fail(
                    "equivariant classes",
                    json!({"word": ball.render(&el.word), "class": i, "images": targets}),
                );
            }
        }
    }
    Verdict::pass("equivariant classes", radius).with_note(format!("ball radius {radius}"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CactusSummary {
    pub vertices: usize,
    pub edges: usize,
    pub class_sizes: Vec<usize>,
    pub betti: i64,
}

/// First Betti number of the quotient of an `n`-gon by classes of its
/// vertices. Errors when the classes overlap or leave the vertex range.
pub fn cactus_betti(n: usize, classes: &[Vec<usize>]) -> Result<CactusSummary> {
    let mut uf = UnionFind::new(n);
    let mut seen = BTreeSet::new();
    for c in classes {
        for &v in c {
            if v >= n || !seen.insert(v) {
                return Err(ForgeError::Precondition(format!("vertex {v} is out of range or in two classes")));
            }
            uf.union(c[0], v);
        }
    }
    let vertices = (0..n).filter(|&v| uf.find(v) == v).count();
    let edges = n;
    let betti = 1 - (vertices as i64 - edges as i64);
    let class_sizes: Vec<usize> = classes.iter().map(Vec::len).filter(|&m| m > 0).collect();
    let expected = 1 + class_sizes.iter().map(|&m| m as i64 - 1).sum::<i64>();
    if n > 0 && betti != expected {
        return Err(ForgeError::Inconsistent(format!("b1 = {betti} but class sizes give {expected}")));
    }
    Ok(CactusSummary { vertices, edges, class_sizes, betti })
}

/// Circle distance in turns.
fn circle_gap(a: &CirclePoint, b: &CirclePoint) -> f64 {
    let d = (a.approx() - b.approx()).abs();
    d.min(1.0 - d)
}

fn contracts(g: &CircleHomeo, p: &CirclePoint) -> bool {
    let q = g.apply(p);
    let r = g.apply(&q);
    let (d1, d2) = (circle_gap(p, &q), circle_gap(&q, &r));
    d1 < 1e-12 || d2 <= d1 / 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordDynamics {
    pub word: String,
    pub sampled: usize,
    pub north_south: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsStats {
    pub power: u32,
    pub words: Vec<WordDynamics>,
    pub fraction: f64,
}

/// For each nontrivial word `w` of the ball, samples classes and counts
/// those whose members are pulled toward an attractor by `w^power` or by
/// its inverse: successive displacements at least halve. Identity powers
/// are skipped.
pub fn dynamics_sample(
    action: &GroupAction,
    radius: u32,
    b: &BoundaryClasses,
    power: u32,
    limit: usize,
) -> DynamicsStats {
    let ball = action.ball(radius);
    let stride = b.len().div_ceil(limit.max(1)).max(1);
    let mut words = Vec::new();
    let (mut hits, mut total) = (0, 0);
    for el in ball.nontrivial() {
        let mut g = CircleHomeo::identity();
        for _ in 0..power {
            g = g.compose(&el.map);
        }
        if g.is_identity() {
            continue;
        }
        let inv = g.inverse();
        let mut wd = WordDynamics { word: format!("({})^{power}", ball.render(&el.word)), sampled: 0, north_south: 0 };
        for c in b.classes.iter().step_by(stride) {
            wd.sampled += 1;
            if c.members.iter().all(|p| contracts(&g, p)) || c.members.iter().all(|p| contracts(&inv, p)) {
                wd.north_south += 1;
            }
        }
        hits += wd.north_south;
        total += wd.sampled;
        words.push(wd);
    }
    DynamicsStats { power, words, fraction: if total == 0 { 0.0 } else { hits as f64 / total as f64 } }
}

/// Class ids of a point of N given as `(λ, μ_x, μ_y)`.
pub fn triple_coordinates(b: &BoundaryClasses, lambda: &Leaf, mu_x: &Leaf, mu_y: &Leaf) -> Result<[usize; 3]> {
    let look = |l: &Leaf| {
        b.class_of_leaf(l).ok_or_else(|| ForgeError::Precondition(format!("leaf {l:?} is beyond the enumeration")))
    };
    Ok([look(lambda)?, look(mu_x)?, look(mu_y)?])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum TripleCheck {
    Injective { samples: usize },
    Collision { first: [Leaf; 3], second: [Leaf; 3] },
    Skipped { notice: String },
}

/// Injectivity of triple coordinates on distinct samples, meaningful only
/// without perfect fits.
pub fn triples_injective(b: &BoundaryClasses, samples: &[[Leaf; 3]], has_perfect_fits: bool) -> Result<TripleCheck> {
    if has_perfect_fits {
        return Ok(TripleCheck::Skipped {
            notice: "perfect fits present; triple coordinates need not be injective".into(),
        });
    }
    let mut seen: BTreeMap<[usize; 3], &[Leaf; 3]> = BTreeMap::new();
    for s in samples {
        let t = triple_coordinates(b, &s[0], &s[1], &s[2])?;
        if let Some(prev) = seen.insert(t, s) {
            if prev != s {
                return Ok(TripleCheck::Collision { first: prev.clone(), second: s.clone() });
            }
        }
    }
    Ok(TripleCheck::Injective { samples: seen.len() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub depth: u32,
    pub radius: u32,
    pub classes: BoundaryClasses,
    pub perfect_fits: usize,
    pub unlinked: Verdict,
    pub equivariant: Verdict,
    pub cactus: CactusSummary,
    pub dynamics: DynamicsStats,
    pub triples: TripleCheck,
}

/// Builds the classes at `depth` and runs every check on them.
pub fn ideal_boundary(
    plus: &AlmostLamination,
    minus: &AlmostLamination,
    action: &GroupAction,
    depth: u32,
    radius: u32,
) -> Result<BoundaryReport> {
    let pl = plus.enumerate(depth);
    let ml = minus.enumerate(depth);
    let graph = perfect_fits(plus, minus, depth);
    let fits: Vec<(Leaf, Leaf)> =
        graph.edges.iter().map(|&(a, b)| (graph.vertices[a].clone(), graph.vertices[b].clone())).collect();
    let leaves: Vec<Leaf> = pl.iter().chain(ml.iter()).cloned().collect();
    let classes = boundary_classes(&leaves, &fits);
    let points: Vec<&CirclePoint> = classes.index.keys().collect();
    let pos: BTreeMap<&CirclePoint, usize> = points.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let groups: Vec<Vec<usize>> = classes.classes.iter().map(|c| c.members.iter().map(|p| pos[p]).collect()).collect();
    let cactus = cactus_betti(points.len(), &groups)?;
    let mut samples = Vec::new();
    for l in pl.iter() {
        let crossing: Vec<&Leaf> = ml.iter().filter(|m| l.is_linked(m)).collect();
        for w in crossing.windows(2) {
            samples.push([l.clone(), w[0].clone(), w[1].clone()]);
        }
    }
    Ok(BoundaryReport {
        depth,
        radius,
        perfect_fits: fits.len(),
        unlinked: unlinked_classes_check(&classes.classes, depth),
        equivariant: equivariance_check(&classes, action, radius),
        cactus,
        dynamics: dynamics_sample(action, radius.min(2), &classes, 4, 64),
        triples: triples_injective(&classes, &samples, !fits.is_empty())?,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::QuadraticNumber as Qn;
    use crate::gallery;
    use proptest::prelude::*;

    fn leaf(a: (i64, i64), b: (i64, i64), s: Sign) -> Leaf {
        Leaf::from_ratios(a, b, s).unwrap()
    }

    fn pt(n: i64, d: i64) -> CirclePoint {
        CirclePoint::new(Qn::from_ratio(n, d))
    }

    #[test]
    fn single_leaf_and_chain() {
        let one = boundary_classes(&[leaf((0, 1), (1, 2), Sign::Plus)], &[]);
        assert_eq!(one.len(), 1);
        assert_eq!(one.classes[0].members, vec![pt(0, 1), pt(1, 2)]);
        assert_eq!(one.class_of(&pt(1, 3)), None);
        let chain = boundary_classes(&[leaf((0, 1), (1, 2), Sign::Plus), leaf((1, 2), (3, 4), Sign::Minus)], &[]);
        assert_eq!(chain.len(), 1);
        assert_eq!(chain.classes[0].members, vec![pt(0, 1), pt(1, 2), pt(3, 4)]);
    }

    #[test]
    fn linked_and_unlinked_traces() {
        let linked = boundary_classes(&[leaf((0, 1), (1, 2), Sign::Plus), leaf((1, 4), (3, 4), Sign::Plus)], &[]);
        assert!(unlinked_classes_check(&linked.classes, 1).is_fail());
        let apart = boundary_classes(&[leaf((0, 1), (1, 2), Sign::Plus), leaf((3, 5), (4, 5), Sign::Plus)], &[]);
        assert!(unlinked_classes_check(&apart.classes, 1).is_pass());
    }

    #[test]
    fn cactus_examples() {
        assert_eq!(cactus_betti(6, &[]).unwrap().betti, 1);
        assert_eq!(cactus_betti(6, &[vec![0, 3]]).unwrap().betti, 2);
        assert_eq!(cactus_betti(10, &[vec![0, 2], vec![4, 6], vec![1, 5, 8]]).unwrap().betti, 5);
        assert!(cactus_betti(4, &[vec![0, 1], vec![1, 2]]).is_err());
    }

    /// Betti number by spanning forest over the quotient multigraph.
    fn brute_betti(n: usize, classes: &[Vec<usize>]) -> i64 {
        let mut label: Vec<usize> = (0..n).collect();
        for c in classes {
            for &v in c {
                label[v] = c[0];
            }
        }
        let mut forest = UnionFind::new(n);
        let mut cycles = 0;
        for i in 0..n {
            let (a, b) = (label[i], label[(i + 1) % n]);
            if forest.find(a) == forest.find(b) {
                cycles += 1;
            } else {
                forest.union(a, b);
            }
        }
        cycles
    }

    proptest! {
        #[test]
        fn cactus_matches_forest_count(n in 3usize..40, seed in proptest::collection::vec(0usize..1000, 0..40)) {
            let mut free: Vec<usize> = (0..n).collect();
            let mut classes = Vec::new();
            let mut it = seed.into_iter();
            while let (Some(k), true) = (it.next(), free.len() >= 2) {
                let m = 2 + k % 3.min(free.len() - 1);
                let c: Vec<usize> = (0..m.min(free.len())).map(|j| free.remove((k + j) % free.len())).collect();
                classes.push(c);
            }
            let s = cactus_betti(n, &classes).unwrap();
            prop_assert_eq!(s.betti, brute_betti(n, &classes));
        }
    }

    #[test]
    fn cat_map_boundary() {
        let ex = gallery::cat_map_suspension([[2, 1], [1, 1]]).unwrap();
        let r = ideal_boundary(&ex.plus, &ex.minus, &ex.action, 3, 2).unwrap();
        assert_eq!(r.perfect_fits, 0);
        let leaves = ex.plus.enumerate(3).len() + ex.minus.enumerate(3).len();
        assert_eq!(r.classes.len(), leaves);
        assert!(r.classes.classes.iter().all(|c| c.size() == 2));
        assert!(r.unlinked.is_pass() && r.equivariant.is_pass());
        assert!(matches!(r.triples, TripleCheck::Injective { .. }));
        assert!(r.dynamics.fraction >= 0.9, "{:?}", r.dynamics.fraction);
    }

    #[test]
    fn rotation_has_no_north_south() {
        let rot = GroupAction::new(0, vec!["r".into()], vec![CircleHomeo::rotation(&Qn::from_ratio(1, 3))]);
        let b = boundary_classes(&[leaf((0, 1), (1, 2), Sign::Plus), leaf((1, 8), (3, 8), Sign::Minus)], &[]);
        let d = dynamics_sample(&rot, 1, &b, 4, 10);
        assert_eq!(d.fraction, 0.0);
        assert!(!d.words.is_empty());
    }

    #[test]
    fn perfect_fits_skip_triples() {
        let plus = AlmostLamination::explicit(Sign::Plus, vec![leaf((0, 1), (1, 2), Sign::Plus)]);
        let minus = AlmostLamination::explicit(Sign::Minus, vec![leaf((1, 2), (3, 4), Sign::Minus)]);
        let r = ideal_boundary(&plus, &minus, &GroupAction::trivial(), 1, 1).unwrap();
        assert!(r.perfect_fits > 0);
        assert!(matches!(r.triples, TripleCheck::Skipped { .. }));
    }
}
