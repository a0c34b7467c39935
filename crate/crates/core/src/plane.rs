//! The collapsed bifoliated plane: slits of the finite chord arrangement,
//! leaf-space approximations, perfect fits and product-region search.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::circle::CirclePoint;
use crate::error::{ForgeError, Result};
use crate::lamination::{AlmostLamination, GapKind, GapReport, Leaf, Sign};
use crate::verify::{crossing_key, effective_gaps, interleave, CrossingKey, UnionFind};

/// Two unlinked point sets may share points; they are linked when one set
/// meets two different complementary arcs of the other.
pub fn sets_linked(a: &[CirclePoint], b: &[CirclePoint]) -> Option<[CirclePoint; 4]> {
    let probe = |a: &[CirclePoint], b: &[CirclePoint]| -> Option<[CirclePoint; 4]> {
        let sa: BTreeSet<&CirclePoint> = a.iter().collect();
        if sa.len() < 2 {
            return None;
        }
        let av: Vec<&CirclePoint> = sa.iter().copied().collect();
        // arc index of p: number of points of `a` below it
        let mut seen: Option<(usize, &CirclePoint)> = None;
        for p in b.iter().filter(|p| !sa.contains(p)) {
            let k = av.partition_point(|x| *x < p) % av.len();
            match seen {
                None => seen = Some((k, p)),
                Some((k0, p0)) if k0 != k => {
                    let (x, y) = (av[k], av[(k + av.len() - 1) % av.len()]);
                    return Some([x.clone(), y.clone(), p0.clone(), p.clone()]);
                }
                _ => {}
            }
        }
        None
    };
    probe(a, b).or_else(|| probe(b, a))
}

/// A piece of a leaf between consecutive crossings with the other family.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub leaf: Leaf,
    /// Position among the `crossings + 1` pieces, counted from `leaf.lo()`.
    pub index: usize,
    /// Bounded by crossings at both ends.
    pub bounded: bool,
}

/// A nontrivial class of the slit relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slit {
    /// Vertex lists of the complementary cells in the class.
    pub cells: Vec<Vec<CirclePoint>>,
    pub segments: Vec<Segment>,
    /// Endpoints of the leaves contributing segments.
    pub trace: Vec<CirclePoint>,
    /// False for half-plane and crown regions, which are removed rather
    /// than collapsed.
    pub compact: bool,
    /// Every segment is bounded by crossings at this depth.
    pub bounded_at_depth: bool,
}

/// Per-leaf crossing positions with the opposite family, sorted.
struct Crossings {
    keys: BTreeMap<Leaf, Vec<CrossingKey>>,
}

impl Crossings {
    fn new(family: &[Leaf], other: &[Leaf]) -> Self {
        let keys = family
            .iter()
            .map(|l| {
                let mut k: Vec<CrossingKey> = other.iter().filter_map(|o| crossing_key(l, o)).collect();
                k.sort();
                (l.clone(), k)
            })
            .collect();
        Crossings { keys }
    }

    fn count(&self, l: &Leaf) -> usize {
        self.keys.get(l).map_or(0, Vec::len)
    }

    /// Segments of `l` meeting the open key interval `(lo, hi)`.
    fn segments_between(&self, l: &Leaf, lo: &CrossingKey, hi: &CrossingKey) -> Vec<Segment> {
        let keys = &self.keys[l];
        let k = keys.len();
        (0..=k)
            .filter(|&i| {
                let start_ok = i == k || &keys[i] > lo;
                let end_ok = i == 0 || &keys[i - 1] < hi;
                start_ok && end_ok
            })
            .map(|i| Segment { leaf: l.clone(), index: i, bounded: i > 0 && i < k })
            .collect()
    }

    fn all_segments(&self, l: &Leaf) -> Vec<Segment> {
        let k = self.count(l);
        (0..=k).map(|i| Segment { leaf: l.clone(), index: i, bounded: i > 0 && i < k }).collect()
    }
}

fn is_cell_kind(kind: &GapKind) -> bool {
    matches!(kind, GapKind::Polygon { .. } | GapKind::Cataclysm { .. } | GapKind::HalfPlane { .. })
}

fn compact_kind(kind: &GapKind) -> bool {
    matches!(kind, GapKind::Polygon { .. } | GapKind::Cataclysm { .. })
}

/// Whether some chord of `others` enters the region.
fn region_crossed(g: &GapReport, others: &[Leaf]) -> bool {
    others.iter().any(|o| {
        g.leaves.iter().any(|s| s.is_linked(o))
            || (g.vertices.contains(o.lo()) && g.vertices.contains(o.hi()) && !g.leaves.iter().any(|s| s.same_chord(o)))
    })
}

fn regions_overlap(a: &GapReport, b: &GapReport) -> bool {
    a.leaves.iter().any(|s| b.leaves.iter().any(|t| s.is_linked(t)))
}

fn members_of<'a>(g: &'a GapReport, family: &'a [Leaf]) -> impl Iterator<Item = &'a Leaf> + 'a {
    g.leaves.iter().filter(move |s| family.binary_search(s).is_ok())
}

/// Pieces of the member sides of `g` lying inside `region`.
fn sides_inside(g: &GapReport, family: &[Leaf], region: &GapReport, cr: &Crossings) -> Vec<Segment> {
    let mut out = Vec::new();
    for s in members_of(g, family) {
        let keys: Vec<CrossingKey> = region.leaves.iter().filter_map(|t| crossing_key(s, t)).collect();
        if keys.len() < 2 {
            continue;
        }
        let lo = keys.iter().min().expect("nonempty");
        let hi = keys.iter().max().expect("nonempty");
        out.extend(cr.segments_between(s, lo, hi));
    }
    out
}

struct Arrangement {
    plus: Vec<Leaf>,
    minus: Vec<Leaf>,
    gaps_plus: Vec<GapReport>,
    gaps_minus: Vec<GapReport>,
    cr_plus: Crossings,
    cr_minus: Crossings,
}

impl Arrangement {
    fn new(plus: &AlmostLamination, minus: &AlmostLamination, depth: u32) -> Result<Self> {
        let p = plus.enumerate(depth).to_vec();
        let m = minus.enumerate(depth).to_vec();
        let keep = |g: Vec<GapReport>| -> Vec<GapReport> { g.into_iter().filter(|g| is_cell_kind(&g.kind)).collect() };
        Ok(Arrangement {
            gaps_plus: keep(effective_gaps(plus, depth)?),
            gaps_minus: keep(effective_gaps(minus, depth)?),
            cr_plus: Crossings::new(&p, &m),
            cr_minus: Crossings::new(&m, &p),
            plus: p,
            minus: m,
        })
    }

    /// Complementary cells, each with its region kinds and boundary pieces.
    fn cells(&self) -> Vec<(Vec<CirclePoint>, bool, Vec<Segment>)> {
        let mut cells = Vec::new();
        for gp in &self.gaps_plus {
            for gm in &self.gaps_minus {
                if !regions_overlap(gp, gm) {
                    continue;
                }
                let mut segs = sides_inside(gp, &self.plus, gm, &self.cr_plus);
                segs.extend(sides_inside(gm, &self.minus, gp, &self.cr_minus));
                let mut verts: Vec<CirclePoint> = gp.vertices.iter().chain(&gm.vertices).cloned().collect();
                verts.sort();
                verts.dedup();
                cells.push((verts, compact_kind(&gp.kind) && compact_kind(&gm.kind), segs));
            }
        }
        for (gaps, family, others, cr) in [
            (&self.gaps_plus, &self.plus, &self.minus, &self.cr_plus),
            (&self.gaps_minus, &self.minus, &self.plus, &self.cr_minus),
        ] {
            for g in gaps {
                if region_crossed(g, others) {
                    continue;
                }
                let segs: Vec<Segment> = members_of(g, family).flat_map(|s| cr.all_segments(s)).collect();
                cells.push((g.vertices.clone(), compact_kind(&g.kind), segs));
            }
        }
        cells
    }
}

/// Closes the slit relation on the enumerated arrangement. Only classes
/// containing a cell are returned; every other class is a single segment.
pub fn slits(plus: &AlmostLamination, minus: &AlmostLamination, depth: u32) -> Result<Vec<Slit>> {
    let arr = Arrangement::new(plus, minus, depth)?;
    Ok(slits_of(&arr))
}

fn slits_of(arr: &Arrangement) -> Vec<Slit> {
    let cells = arr.cells();
    let mut seg_ids: BTreeMap<Segment, usize> = BTreeMap::new();
    for (_, _, segs) in &cells {
        for s in segs {
            let n = seg_ids.len();
            seg_ids.entry(s.clone()).or_insert(n);
        }
    }
    let nc = cells.len();
    let mut uf = UnionFind::new(nc + seg_ids.len());
    for (c, (_, _, segs)) in cells.iter().enumerate() {
        for s in segs {
            uf.union(c, nc + seg_ids[s]);
        }
    }
    let mut classes: BTreeMap<usize, (Vec<usize>, Vec<Segment>)> = BTreeMap::new();
    for c in 0..nc {
        classes.entry(uf.find(c)).or_default().0.push(c);
    }
    for (s, &i) in &seg_ids {
        let r = uf.find(nc + i);
        classes.entry(r).or_default().1.push(s.clone());
    }
    classes
        .into_values()
        .map(|(cs, segs)| {
            let trace: BTreeSet<CirclePoint> =
                segs.iter().flat_map(|s| s.leaf.endpoints().into_iter().cloned()).collect();
            Slit {
                cells: cs.iter().map(|&c| cells[c].0.clone()).collect(),
                compact: cs.iter().all(|&c| cells[c].1),
                bounded_at_depth: segs.iter().all(|s| s.bounded),
                segments: segs,
                trace: trace.into_iter().collect(),
            }
        })
        .collect()
}

/// A class of enumerated leaves identified in the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafClass {
    pub leaves: Vec<Leaf>,
    /// Prong count when the class is a singular leaf.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prongs: Option<usize>,
}

/// One foliation's leaf space, restricted to the enumerated classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSpaceApprox {
    pub sign: Sign,
    pub classes: Vec<LeafClass>,
    /// Class ids in transversal order when `linear`, else by representative.
    pub order: Vec<usize>,
    pub linear: bool,
    pub non_separated: Vec<(usize, usize)>,
}

impl LeafSpaceApprox {
    pub fn class_of(&self, l: &Leaf) -> Option<usize> {
        self.classes.iter().position(|c| c.leaves.iter().any(|m| m.same_chord(l)))
    }
}

/// A point of the plane: a class of each sign, linked.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlanePoint {
    pub plus: usize,
    pub minus: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prongs: Option<usize>,
}

/// Perfect fits among enumerated leaves and their chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfectFitGraph {
    pub vertices: Vec<Leaf>,
    pub edges: Vec<(usize, usize)>,
    pub components: Vec<Vec<usize>>,
    /// Components whose edges close up into a cycle.
    pub polygon_cycles: Vec<Vec<usize>>,
    /// Largest chain size at `depth − 2`, `depth − 1` and `depth`.
    pub growth: Vec<usize>,
    /// The largest chain grew strictly at each of those depths.
    pub infinite_suspect: bool,
}

/// A finite-scale product region: every enumerated leaf meeting the half of
/// any leaf between `x` and `y` on `side` meets both `x` and `y` there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductRegionWitness {
    pub leaf: Leaf,
    pub x: Leaf,
    pub y: Leaf,
    /// `true` for the half on the counter-clockwise arc from `leaf.lo()`.
    pub inner_side: bool,
    pub support: usize,
    pub falsification_only: bool,
}

/// The finite incidence structure standing in for the bifoliated plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneApprox {
    pub depth: u32,
    pub plus: LeafSpaceApprox,
    pub minus: LeafSpaceApprox,
    pub points: Vec<PlanePoint>,
    pub slits: Vec<Slit>,
    pub perfect_fits: PerfectFitGraph,
}

impl PlaneApprox {
    pub fn singular_points(&self) -> impl Iterator<Item = &PlanePoint> {
        self.points.iter().filter(|p| p.prongs.is_some())
    }
}

fn leaf_space(
    sign: Sign,
    family: &[Leaf],
    others: &[Leaf],
    singular: &[(Vec<Leaf>, usize)],
    cataclysms: &[Vec<Leaf>],
) -> LeafSpaceApprox {
    let mut uf = UnionFind::new(family.len());
    let idx = |l: &Leaf| family.binary_search(l).ok();
    for (sides, _) in singular {
        let ids: Vec<usize> = sides.iter().filter_map(idx).collect();
        for w in ids.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..family.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let root_to_class: BTreeMap<usize, usize> = groups.keys().enumerate().map(|(c, &r)| (r, c)).collect();
    let classes: Vec<LeafClass> = groups
        .values()
        .map(|ids| {
            let leaves: Vec<Leaf> = ids.iter().map(|&i| family[i].clone()).collect();
            let prongs = singular.iter().find(|(s, _)| s.iter().any(|x| leaves.contains(x))).map(|(_, p)| *p);
            LeafClass { leaves, prongs }
        })
        .collect();
    let class_of = |l: &Leaf, uf: &mut UnionFind| idx(l).map(|i| root_to_class[&uf.find(i)]);
    let mut non_separated = BTreeSet::new();
    for sides in cataclysms {
        let ids: Vec<usize> = sides.iter().filter_map(|s| class_of(s, &mut uf)).collect();
        for (a, &x) in ids.iter().enumerate() {
            for &y in &ids[a + 1..] {
                if x != y {
                    non_separated.insert((x.min(y), x.max(y)));
                }
            }
        }
    }
    let transversal = others.iter().find(|t| classes.iter().all(|c| c.leaves.iter().any(|l| l.is_linked(t))));
    let (order, linear) = match transversal {
        Some(t) => {
            let mut keyed: Vec<(CrossingKey, usize)> = classes
                .iter()
                .enumerate()
                .map(|(i, c)| (c.leaves.iter().filter_map(|l| crossing_key(t, l)).min().expect("crosses"), i))
                .collect();
            keyed.sort();
            (keyed.into_iter().map(|(_, i)| i).collect(), true)
        }
        None => ((0..classes.len()).collect(), classes.len() <= 1),
    };
    LeafSpaceApprox { sign, classes, order, linear, non_separated: non_separated.into_iter().collect() }
}

/// Builds the plane approximation. Fails when a determined polygon has no
/// interleaving partner.
pub fn build_plane(plus: &AlmostLamination, minus: &AlmostLamination, depth: u32) -> Result<PlaneApprox> {
    let arr = Arrangement::new(plus, minus, depth)?;
    let plain = |g: &&GapReport| matches!(g.kind, GapKind::Polygon { .. });
    let mut singular_plus = Vec::new();
    let mut singular_minus = Vec::new();
    let mut pairs = Vec::new();
    for gp in arr.gaps_plus.iter().filter(plain) {
        let Some(gm) = arr.gaps_minus.iter().filter(plain).find(|gm| interleave(&gp.vertices, &gm.vertices)) else {
            return Err(ForgeError::Precondition(format!(
                "condition (v): polygon with vertices {:?} has no interleaving partner",
                gp.vertices.iter().map(|p| p.to_string()).collect::<Vec<_>>()
            )));
        };
        singular_plus.push((gp.leaves.clone(), gp.vertices.len()));
        singular_minus.push((gm.leaves.clone(), gm.vertices.len()));
        pairs.push((gp.leaves[0].clone(), gm.leaves[0].clone(), gp.vertices.len()));
    }
    if let Some(gm) =
        arr.gaps_minus.iter().filter(plain).find(|gm| !pairs.iter().any(|(_, m, _)| gm.leaves.contains(m)))
    {
        return Err(ForgeError::Precondition(format!(
            "condition (v): polygon with vertices {:?} has no interleaving partner",
            gm.vertices.iter().map(|p| p.to_string()).collect::<Vec<_>>()
        )));
    }
    let cataclysm_sides = |gaps: &[GapReport], family: &[Leaf]| -> Vec<Vec<Leaf>> {
        gaps.iter()
            .filter(|g| matches!(g.kind, GapKind::Cataclysm { .. }))
            .map(|g| members_of(g, family).cloned().collect())
            .collect()
    };
    let lp = leaf_space(Sign::Plus, &arr.plus, &arr.minus, &singular_plus, &cataclysm_sides(&arr.gaps_plus, &arr.plus));
    let lm =
        leaf_space(Sign::Minus, &arr.minus, &arr.plus, &singular_minus, &cataclysm_sides(&arr.gaps_minus, &arr.minus));
    let mut points = BTreeSet::new();
    for (i, cp) in lp.classes.iter().enumerate() {
        for (j, cm) in lm.classes.iter().enumerate() {
            let singular = pairs.iter().find(|(a, b, _)| cp.leaves.contains(a) && cm.leaves.contains(b)).map(|t| t.2);
            if singular.is_some() || cp.leaves.iter().any(|a| cm.leaves.iter().any(|b| a.is_linked(b))) {
                points.insert(PlanePoint { plus: i, minus: j, prongs: singular });
            }
        }
    }
    let slits = slits_of(&arr);
    for (i, a) in slits.iter().enumerate() {
        for b in &slits[i + 1..] {
            if let Some(w) = sets_linked(&a.trace, &b.trace) {
                return Err(ForgeError::Inconsistent(format!("slit traces are linked at {w:?}")));
            }
        }
    }
    Ok(PlaneApprox {
        depth,
        plus: lp,
        minus: lm,
        points: points.into_iter().collect(),
        slits,
        perfect_fits: perfect_fits(plus, minus, depth),
    })
}

fn fit_edges(p: &[Leaf], m: &[Leaf]) -> (Vec<Leaf>, Vec<(usize, usize)>) {
    let mut by_end: BTreeMap<&CirclePoint, Vec<usize>> = BTreeMap::new();
    for (j, l) in m.iter().enumerate() {
        for e in l.endpoints() {
            by_end.entry(e).or_default().push(j);
        }
    }
    let mut pairs = BTreeSet::new();
    for (i, l) in p.iter().enumerate() {
        for e in l.endpoints() {
            for &j in by_end.get(e).into_iter().flatten() {
                if !l.same_chord(&m[j]) {
                    pairs.insert((i, j));
                }
            }
        }
    }
    let mut vertices: Vec<Leaf> = Vec::new();
    let mut vid: BTreeMap<(bool, usize), usize> = BTreeMap::new();
    let mut id = |minus: bool, k: usize, leaf: &Leaf, vertices: &mut Vec<Leaf>| -> usize {
        *vid.entry((minus, k)).or_insert_with(|| {
            vertices.push(leaf.clone());
            vertices.len() - 1
        })
    };
    let edges = pairs
        .into_iter()
        .map(|(i, j)| {
            let a = id(false, i, &p[i], &mut vertices);
            let b = id(true, j, &m[j], &mut vertices);
            (a, b)
        })
        .collect();
    (vertices, edges)
}

fn components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(n);
    for &(a, b) in edges {
        uf.union(a, b);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..n {
        groups.entry(uf.find(v)).or_default().push(v);
    }
    groups.into_values().collect()
}

fn largest_chain(plus: &AlmostLamination, minus: &AlmostLamination, depth: u32) -> usize {
    let (v, e) = fit_edges(&plus.enumerate(depth), &minus.enumerate(depth));
    components(v.len(), &e).iter().map(Vec::len).max().unwrap_or(0)
}

/// Opposite-sign leaves sharing an endpoint, grouped into chains.
pub fn perfect_fits(plus: &AlmostLamination, minus: &AlmostLamination, depth: u32) -> PerfectFitGraph {
    let (vertices, edges) = fit_edges(&plus.enumerate(depth), &minus.enumerate(depth));
    let comps = components(vertices.len(), &edges);
    let polygon_cycles =
        comps.iter().filter(|c| edges.iter().filter(|(a, _)| c.contains(a)).count() >= c.len()).cloned().collect();
    let growth: Vec<usize> = (depth.saturating_sub(2)..=depth).map(|d| largest_chain(plus, minus, d)).collect();
    let infinite_suspect = depth >= 2 && growth.windows(2).all(|w| w[1] > w[0]);
    PerfectFitGraph { vertices, edges, components: comps, polygon_cycles, growth, infinite_suspect }
}

/// Searches consecutive pairs of each thread for a finite-scale product
/// region. A witness is evidence only at this depth.
pub fn product_region_detect(
    plus: &AlmostLamination,
    minus: &AlmostLamination,
    depth: u32,
) -> Option<ProductRegionWitness> {
    let p = plus.enumerate(depth);
    let m = minus.enumerate(depth);
    for (base, family, across) in [(&p, &m, &p), (&m, &p, &m)] {
        for l in base.iter() {
            let mut thread: Vec<(CrossingKey, &Leaf)> =
                family.iter().filter_map(|x| crossing_key(l, x).map(|k| (k, x))).collect();
            thread.sort_by(|a, b| a.0.cmp(&b.0));
            for w in thread.windows(2) {
                let (x, y) = (w[0].1, w[1].1);
                for inner in [true, false] {
                    let on_side = |c: &Leaf| {
                        !c.same_chord(l) && c.endpoints().iter().all(|e| l.has_endpoint(e) || l.inner_side(e) == inner)
                    };
                    let meets_x: Vec<&Leaf> = across.iter().filter(|c| on_side(c) && c.is_linked(x)).collect();
                    if meets_x.len() < 2 {
                        continue;
                    }
                    let meets_y = across.iter().filter(|c| on_side(c) && c.is_linked(y));
                    let all = meets_x.iter().all(|c| c.is_linked(y)) && meets_y.clone().all(|c| c.is_linked(x));
                    if all {
                        return Some(ProductRegionWitness {
                            leaf: l.clone(),
                            x: x.clone(),
                            y: y.clone(),
                            inner_side: inner,
                            support: meets_x.len(),
                            falsification_only: true,
                        });
                    }
                }
            }
        }
    }
    None
}
