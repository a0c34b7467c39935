//! Leaves, almost laminations, complementary regions and orientations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::action::GroupAction;
use crate::circle::{in_open_arc, CirclePoint, QuadraticNumber};
use crate::error::{ForgeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn opposite(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

/// A chord of the circle, stored with `lo < hi` by angle.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Leaf {
    lo: CirclePoint,
    hi: CirclePoint,
    sign: Sign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Linked,
    Unlinked,
    SharedEndpoint,
    Equal,
}

impl Leaf {
    pub fn new(a: CirclePoint, b: CirclePoint, sign: Sign) -> Result<Leaf> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(Leaf { lo: a, hi: b, sign }),
            std::cmp::Ordering::Greater => Ok(Leaf { lo: b, hi: a, sign }),
            std::cmp::Ordering::Equal => Err(ForgeError::Degenerate(format!("leaf with a repeated endpoint {a}"))),
        }
    }

    pub fn from_ratios(a: (i64, i64), b: (i64, i64), sign: Sign) -> Result<Leaf> {
        Leaf::new(CirclePoint::ratio(a.0, a.1), CirclePoint::ratio(b.0, b.1), sign)
    }

    pub fn lo(&self) -> &CirclePoint {
        &self.lo
    }

    pub fn hi(&self) -> &CirclePoint {
        &self.hi
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn with_sign(&self, sign: Sign) -> Leaf {
        Leaf { lo: self.lo.clone(), hi: self.hi.clone(), sign }
    }

    pub fn endpoints(&self) -> [&CirclePoint; 2] {
        [&self.lo, &self.hi]
    }

    pub fn has_endpoint(&self, p: &CirclePoint) -> bool {
        &self.lo == p || &self.hi == p
    }

    /// Same chord, regardless of sign.
    pub fn same_chord(&self, o: &Leaf) -> bool {
        self.lo == o.lo && self.hi == o.hi
    }

    /// The endpoint other than `p`.
    pub fn other_end(&self, p: &CirclePoint) -> &CirclePoint {
        if &self.lo == p {
            &self.hi
        } else {
            &self.lo
        }
    }

    /// True when `p` lies in the open arc running counter-clockwise from `lo` to `hi`.
    pub fn inner_side(&self, p: &CirclePoint) -> bool {
        in_open_arc(&self.lo, &self.hi, p)
    }

    /// Whether `p` and `q` (neither an endpoint) lie on different sides.
    pub fn separates(&self, p: &CirclePoint, q: &CirclePoint) -> bool {
        self.inner_side(p) != self.inner_side(q)
    }

    pub fn linked(&self, o: &Leaf) -> Linkage {
        if self.same_chord(o) {
            return Linkage::Equal;
        }
        if self.has_endpoint(&o.lo) || self.has_endpoint(&o.hi) {
            return Linkage::SharedEndpoint;
        }
        if self.separates(&o.lo, &o.hi) {
            Linkage::Linked
        } else {
            Linkage::Unlinked
        }
    }

    pub fn is_linked(&self, o: &Leaf) -> bool {
        self.linked(o) == Linkage::Linked
    }
}

impl fmt::Debug for Leaf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{{}, {}}}", self.sign.symbol(), self.lo, self.hi)
    }
}

/// How membership is decided beyond the enumerated leaves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    /// Members are exactly the seeds (or their orbit when an action is attached).
    Explicit,
    /// Chords joining the bottom and top sides of the boundary square.
    Vertical,
    /// Chords joining the right and left sides of the boundary square.
    Horizontal,
}

/// The boundary-square parametrization of the circle: bottom `[0,1/4)`,
/// right `[1/4,1/2)`, top `[1/2,3/4)`, left `[3/4,1)`.
pub mod square {
    use super::*;

    fn q(n: i64, d: i64) -> QuadraticNumber {
        QuadraticNumber::from_ratio(n, d)
    }

    pub fn is_vertical(l: &Leaf) -> bool {
        let (a, b) = (l.lo().angle(), l.hi().angle());
        a > &QuadraticNumber::zero() && a < &q(1, 4) && &(a + b) == &q(3, 4)
    }

    pub fn is_horizontal(l: &Leaf) -> bool {
        let (a, b) = (l.lo().angle(), l.hi().angle());
        a > &q(1, 4) && a < &q(1, 2) && &(a + b) == &q(5, 4)
    }
}

/// An almost lamination given by seeds, an optional acting group whose ball
/// orbits enumerate it, a membership oracle and declared removed sides.
pub struct AlmostLamination {
    pub sign: Sign,
    pub field_d: u64,
    pub seeds: Vec<Leaf>,
    pub removed_sides: Vec<Leaf>,
    pub oracle: Oracle,
    action: Option<Arc<GroupAction>>,
    /// Ball radius used by the explicit oracle when an action is attached.
    pub oracle_radius: u32,
    cache: Mutex<BTreeMap<u32, Arc<Vec<Leaf>>>>,
}

impl Clone for AlmostLamination {
    fn clone(&self) -> Self {
        AlmostLamination {
            sign: self.sign,
            field_d: self.field_d,
            seeds: self.seeds.clone(),
            removed_sides: self.removed_sides.clone(),
            oracle: self.oracle.clone(),
            action: self.action.clone(),
            oracle_radius: self.oracle_radius,
            cache: Mutex::new(self.cache.lock().unwrap().clone()),
        }
    }
}

impl fmt::Debug for AlmostLamination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlmostLamination")
            .field("sign", &self.sign)
            .field("seeds", &self.seeds.len())
            .field("removed_sides", &self.removed_sides)
            .field("oracle", &self.oracle)
            .finish()
    }
}

impl AlmostLamination {
    /// A finite lamination consisting of exactly the given leaves.
    pub fn explicit(sign: Sign, leaves: Vec<Leaf>) -> Self {
        Self::with_oracle(sign, leaves, Oracle::Explicit)
    }

    pub fn with_oracle(sign: Sign, leaves: Vec<Leaf>, oracle: Oracle) -> Self {
        let seeds: Vec<Leaf> = leaves.into_iter().map(|l| l.with_sign(sign)).collect();
        let field_d = seeds.iter().flat_map(|l| l.endpoints()).map(|p| p.field()).find(|&d| d != 0).unwrap_or(0);
        AlmostLamination {
            sign,
            field_d,
            seeds,
            removed_sides: vec![],
            oracle,
            action: None,
            oracle_radius: 6,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_removed(mut self, removed: Vec<Leaf>) -> Self {
        self.removed_sides = removed.into_iter().map(|l| l.with_sign(self.sign)).collect();
        self
    }

    /// Enumerates by orbits of the seeds under balls of the action.
    pub fn with_action(mut self, action: Arc<GroupAction>) -> Self {
        self.action = Some(action);
        self.cache.lock().unwrap().clear();
        self
    }

    pub fn action(&self) -> Option<&Arc<GroupAction>> {
        self.action.as_ref()
    }

    /// Leaves found at the given depth, sorted. Monotone in depth.
    pub fn enumerate(&self, depth: u32) -> Arc<Vec<Leaf>> {
        let radius = match &self.action {
            None => 0,
            Some(_) => depth,
        };
        if let Some(v) = self.cache.lock().unwrap().get(&radius) {
            return v.clone();
        }
        let mut set: BTreeSet<Leaf> = self.seeds.iter().cloned().collect();
        if let Some(action) = &self.action {
            let ball = action.ball(radius);
            for e in &ball.elements {
                for s in &self.seeds {
                    set.insert(e.map.apply_leaf(s).with_sign(self.sign));
                }
            }
        }
        let v = Arc::new(set.into_iter().collect::<Vec<_>>());
        self.cache.lock().unwrap().insert(radius, v.clone());
        v
    }

    pub fn contains(&self, l: &Leaf) -> bool {
        match self.oracle {
            Oracle::Vertical => square::is_vertical(l),
            Oracle::Horizontal => square::is_horizontal(l),
            Oracle::Explicit => {
                let depth = if self.action.is_some() { self.oracle_radius } else { 0 };
                let members = self.enumerate(depth);
                members.binary_search(&l.with_sign(self.sign)).is_ok()
            }
        }
    }

    /// Checks the declared removed sides against the members at `depth`.
    pub fn check_declarations(&self, depth: u32) -> Result<()> {
        let members = self.enumerate(depth);
        for r in &self.removed_sides {
            if self.contains(r) {
                return Err(ForgeError::Contradiction(format!("removed side {r:?} is a member")));
            }
            if let Some(m) = members.iter().find(|m| m.is_linked(r)) {
                return Err(ForgeError::Contradiction(format!("removed side {r:?} is linked with member {m:?}")));
            }
        }
        Ok(())
    }

    pub fn ends(&self, depth: u32) -> BTreeSet<CirclePoint> {
        ends(&self.enumerate(depth))
    }

    /// Orientation of the enumerated leaves, or an odd face as witness.
    pub fn orient(&self, depth: u32) -> std::result::Result<Orientation, GapReport> {
        orient(&self.enumerate(depth))
    }

    /// Complementary regions of members and removed sides, classified.
    pub fn classified_gaps(&self, depth: u32) -> Result<Vec<GapReport>> {
        self.check_declarations(depth)?;
        let mut all: Vec<Leaf> = self.enumerate(depth).to_vec();
        all.extend(self.removed_sides.iter().cloned());
        gaps(&all)?.into_iter().map(|g| classify_gap(g, self, depth)).collect()
    }
}

pub fn ends(leaves: &[Leaf]) -> BTreeSet<CirclePoint> {
    leaves.iter().flat_map(|l| l.endpoints().into_iter().cloned()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GapKind {
    Polygon { sides: usize },
    Cataclysm { pivot: Leaf },
    Crown { pivot: CirclePoint },
    BlownUpCrown { pivotal_side: Leaf },
    HalfPlane { pivotal_side: Leaf },
    Undetermined,
}

impl GapKind {
    pub fn is_determined(&self) -> bool {
        !matches!(self, GapKind::Undetermined)
    }

    /// Cataclysms and half-planes both have exactly one removed side.
    pub fn pivot(&self) -> Option<&Leaf> {
        match self {
            GapKind::Cataclysm { pivot } => Some(pivot),
            GapKind::HalfPlane { pivotal_side } | GapKind::BlownUpCrown { pivotal_side } => Some(pivotal_side),
            _ => None,
        }
    }
}

/// One complementary region of a finite chord family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    /// Vertices in counter-clockwise order.
    pub vertices: Vec<CirclePoint>,
    /// Boundary chords in the order met when walking the boundary.
    pub leaves: Vec<Leaf>,
    /// Whether part of the boundary is an arc of the circle.
    pub touches_circle: bool,
    pub kind: GapKind,
}

impl GapReport {
    pub fn is_polygon(&self) -> bool {
        matches!(self.kind, GapKind::Polygon { .. })
    }
}

/// Finds a linked pair, if any, by a parenthesis sweep.
pub fn find_linked_pair(leaves: &[Leaf]) -> Option<(Leaf, Leaf)> {
    let mut chords: Vec<&Leaf> = leaves.iter().collect();
    chords.sort_by(|a, b| (a.lo(), a.hi()).cmp(&(b.lo(), b.hi())));
    chords.dedup_by(|a, b| a.same_chord(b));
    // events: opening at lo (outer first), closing at hi (inner first)
    let mut events: Vec<(&CirclePoint, u8, &CirclePoint, usize)> = Vec::with_capacity(chords.len() * 2);
    for (i, c) in chords.iter().enumerate() {
        events.push((c.hi(), 0, c.lo(), i));
        events.push((c.lo(), 1, c.hi(), i));
    }
    events.sort_by(|a, b| {
        a.0.cmp(b.0).then(a.1.cmp(&b.1)).then_with(|| if a.1 == 0 { b.2.cmp(a.2) } else { b.2.cmp(a.2) })
    });
    let mut stack: Vec<usize> = Vec::new();
    for (_, kind, _, i) in events {
        if kind == 1 {
            stack.push(i);
        } else if stack.last() == Some(&i) {
            stack.pop();
        } else {
            let c = chords[i];
            let other = chords.iter().find(|o| o.is_linked(c)).expect("sweep mismatch implies a crossing");
            return Some(((*other).clone(), c.clone()));
        }
    }
    None
}

pub fn check_laminar(leaves: &[Leaf]) -> Result<()> {
    match find_linked_pair(leaves) {
        None => Ok(()),
        Some((a, b)) => Err(ForgeError::NotLaminar(format!("{a:?}"), format!("{b:?}"))),
    }
}

/// Complementary regions of a laminar chord family, by walking faces of
/// the chords together with counter-clockwise boundary arcs.
pub fn gaps(leaves: &[Leaf]) -> Result<Vec<GapReport>> {
    check_laminar(leaves)?;
    let mut chords: Vec<Leaf> = leaves.to_vec();
    chords.sort();
    chords.dedup_by(|a, b| a.same_chord(b));
    if chords.is_empty() {
        return Ok(vec![GapReport {
            vertices: vec![],
            leaves: vec![],
            touches_circle: true,
            kind: GapKind::Undetermined,
        }]);
    }
    let verts: Vec<CirclePoint> = ends(&chords).into_iter().collect();
    let vid: HashMap<&CirclePoint, usize> = verts.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let n = verts.len();
    // darts out of each vertex: (key, target, Some(chord) | None for the forward arc)
    let mut out: Vec<Vec<(QuadraticNumber, usize, Option<usize>)>> = vec![Vec::new(); n];
    for (ci, c) in chords.iter().enumerate() {
        let (a, b) = (vid[c.lo()], vid[c.hi()]);
        out[a].push((verts[a].ccw_to(&verts[b]), b, Some(ci)));
        out[b].push((verts[b].ccw_to(&verts[a]), a, Some(ci)));
    }
    for (v, darts) in out.iter_mut().enumerate() {
        darts.push((QuadraticNumber::zero(), (v + 1) % n, None));
        darts.sort_by(|x, y| x.0.cmp(&y.0));
    }
    // incoming key at `to` for a dart from `from`
    let key_at = |to: usize, from: usize, chord: Option<usize>| -> QuadraticNumber {
        match chord {
            None => QuadraticNumber::one(),
            Some(_) => verts[to].ccw_to(&verts[from]),
        }
    };
    let mut used: Vec<Vec<bool>> = out.iter().map(|d| vec![false; d.len()]).collect();
    let mut regions = Vec::new();
    let mut side_count = 0usize;
    for v0 in 0..n {
        for d0 in 0..out[v0].len() {
            if used[v0][d0] {
                continue;
            }
            let (mut v, mut d) = (v0, d0);
            let mut face_chords: Vec<usize> = Vec::new();
            let mut face_verts: Vec<usize> = Vec::new();
            let mut arcs = false;
            while !used[v][d] {
                used[v][d] = true;
                let (_, to, chord) = out[v][d].clone();
                face_verts.push(v);
                match chord {
                    Some(c) => face_chords.push(c),
                    None => arcs = true,
                }
                let k_in = key_at(to, v, chord);
                let nd = out[to].iter().rposition(|(k, _, _)| *k < k_in).expect("the forward arc has key 0");
                v = to;
                d = nd;
            }
            side_count += face_chords.len();
            let mut vs: Vec<CirclePoint> = face_verts.iter().map(|&i| verts[i].clone()).collect();
            vs.sort();
            vs.dedup();
            let ls: Vec<Leaf> = face_chords.iter().map(|&c| chords[c].clone()).collect();
            let kind = if arcs { GapKind::Undetermined } else { GapKind::Polygon { sides: ls.len() } };
            regions.push(GapReport { vertices: vs, leaves: ls, touches_circle: arcs, kind });
        }
    }
    assert_eq!(side_count, 2 * chords.len(), "every chord bounds exactly two regions");
    Ok(regions)
}

/// Upgrades a region using the declared removed sides of `src`.
pub fn classify_gap(mut gap: GapReport, src: &AlmostLamination, depth: u32) -> Result<GapReport> {
    let members = src.enumerate(depth);
    for r in &src.removed_sides {
        if let Some(m) = members.iter().find(|m| m.is_linked(r)) {
            return Err(ForgeError::Contradiction(format!("removed side {r:?} is linked with member {m:?}")));
        }
    }
    let removed: Vec<Leaf> =
        gap.leaves.iter().filter(|l| src.removed_sides.iter().any(|r| r.same_chord(l))).cloned().collect();
    gap.kind = match (&gap.kind, removed.len()) {
        (GapKind::Polygon { .. }, 0) => gap.kind.clone(),
        (GapKind::Polygon { .. }, 1) => GapKind::Cataclysm { pivot: removed[0].clone() },
        (GapKind::Undetermined, 1) if gap.leaves.len() == 1 => GapKind::HalfPlane { pivotal_side: removed[0].clone() },
        (GapKind::Undetermined, _) => GapKind::Undetermined,
        (_, _) => GapKind::Undetermined,
    };
    Ok(gap)
}

/// An orientation of a finite leaf family: each chord gets a tail and a head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Orientation {
    /// `true` when the head is `lo`.
    flipped: BTreeMap<(CirclePoint, CirclePoint), bool>,
    components: usize,
}

impl Orientation {
    /// `(tail, head)` for a chord of the family.
    pub fn oriented(&self, l: &Leaf) -> (CirclePoint, CirclePoint) {
        let f = self.flipped.get(&(l.lo().clone(), l.hi().clone())).copied().unwrap_or(false);
        if f {
            (l.hi().clone(), l.lo().clone())
        } else {
            (l.lo().clone(), l.hi().clone())
        }
    }

    pub fn len(&self) -> usize {
        self.flipped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flipped.is_empty()
    }

    /// Independent blocks; valid orientations number `2^components`.
    pub fn components(&self) -> usize {
        self.components
    }

    pub fn reversed(&self) -> Orientation {
        Orientation {
            flipped: self.flipped.iter().map(|(k, v)| (k.clone(), !v)).collect(),
            components: self.components,
        }
    }

    /// Builds an orientation from explicit per-chord choices (`true` = head at `lo`).
    pub fn from_choices(leaves: &[Leaf], choices: &[bool]) -> Orientation {
        Orientation {
            flipped: leaves.iter().zip(choices).map(|(l, &c)| ((l.lo().clone(), l.hi().clone()), c)).collect(),
            components: 0,
        }
    }
}

/// Boundary chords of a region in counter-clockwise order as
/// `(chord, start, end)`; consecutive region vertices are joined either by
/// a chord or by an arc of the circle.
fn boundary_sequence(r: &GapReport) -> Vec<(Leaf, CirclePoint, CirclePoint)> {
    let vs = &r.vertices;
    let m = vs.len();
    let mut used = vec![false; r.leaves.len()];
    let mut seq = Vec::new();
    for i in 0..m {
        let (p, q) = (&vs[i], &vs[(i + 1) % m]);
        let hit = r
            .leaves
            .iter()
            .enumerate()
            .position(|(j, l)| !used[j] && ((l.lo() == p && l.hi() == q) || (l.lo() == q && l.hi() == p)));
        if let Some(j) = hit {
            used[j] = true;
            seq.push((r.leaves[j].clone(), p.clone(), q.clone()));
        }
    }
    seq
}

/// Parity constraints between consecutive boundary chords of each region:
/// the two endpoints facing each other along the boundary are both heads or
/// both tails. Entries are `(a, b, flips differ, region)`.
fn face_constraints(chords: &[Leaf], regions: &[GapReport]) -> Vec<(usize, usize, bool, usize)> {
    let idx: HashMap<(&CirclePoint, &CirclePoint), usize> =
        chords.iter().enumerate().map(|(i, l)| ((l.lo(), l.hi()), i)).collect();
    let mut out = Vec::new();
    for (ri, r) in regions.iter().enumerate() {
        let seq = boundary_sequence(r);
        let k = seq.len();
        if k < 2 {
            continue;
        }
        for i in 0..k {
            let (a, _, a_end) = &seq[i];
            let (b, b_start, _) = &seq[(i + 1) % k];
            let ia = idx[&(a.lo(), a.hi())];
            let ib = idx[&(b.lo(), b.hi())];
            out.push((ia, ib, (a_end == a.lo()) != (b_start == b.lo()), ri));
        }
    }
    out
}

/// Chooses tails and heads so that every region's boundary is coherent.
/// Fails with the offending region (an odd polygon, or an odd region
/// touching the circle) as witness.
pub fn orient(leaves: &[Leaf]) -> std::result::Result<Orientation, GapReport> {
    let mut chords: Vec<Leaf> = leaves.to_vec();
    chords.sort();
    chords.dedup_by(|a, b| a.same_chord(b));
    let regions = match gaps(&chords) {
        Ok(r) => r,
        Err(_) => {
            return Err(GapReport {
                vertices: vec![],
                leaves: vec![],
                touches_circle: false,
                kind: GapKind::Undetermined,
            })
        }
    };
    let cons = face_constraints(&chords, &regions);
    let n = chords.len();
    let mut adj: Vec<Vec<(usize, bool, usize)>> = vec![Vec::new(); n];
    for &(a, b, differ, r) in &cons {
        adj[a].push((b, differ, r));
        adj[b].push((a, differ, r));
    }
    let mut flip: Vec<Option<bool>> = vec![None; n];
    let mut components = 0;
    for s in 0..n {
        if flip[s].is_some() {
            continue;
        }
        components += 1;
        flip[s] = Some(false);
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            let fv = flip[v].unwrap();
            for &(w, differ, r) in &adj[v] {
                let want = fv ^ differ;
                match flip[w] {
                    None => {
                        flip[w] = Some(want);
                        stack.push(w);
                    }
                    Some(fw) if fw != want => return Err(regions[r].clone()),
                    _ => {}
                }
            }
        }
    }
    Ok(Orientation {
        flipped: chords.iter().zip(flip).map(|(l, f)| ((l.lo().clone(), l.hi().clone()), f.unwrap())).collect(),
        components,
    })
}

/// Checks an orientation against the region rule directly.
pub fn orientation_is_coherent(leaves: &[Leaf], o: &Orientation) -> bool {
    let Ok(regions) = gaps(leaves) else { return false };
    for r in &regions {
        let seq = boundary_sequence(r);
        let k = seq.len();
        for i in 0..k {
            let (a, _, a_end) = &seq[i];
            let (b, b_start, _) = &seq[(i + 1) % k];
            if k >= 2 && (o.oriented(a).1 == *a_end) != (o.oriented(b).1 == *b_start) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(a: (i64, i64), b: (i64, i64)) -> Leaf {
        Leaf::from_ratios(a, b, Sign::Plus).unwrap()
    }

    pub(crate) fn triangle() -> Vec<Leaf> {
        vec![leaf((0, 1), (1, 3)), leaf((1, 3), (2, 3)), leaf((2, 3), (0, 1))]
    }

    pub(crate) fn square() -> Vec<Leaf> {
        vec![leaf((0, 1), (1, 4)), leaf((1, 4), (1, 2)), leaf((1, 2), (3, 4)), leaf((3, 4), (0, 1))]
    }

    #[test]
    fn linkage_examples() {
        assert_eq!(leaf((0, 1), (1, 2)).linked(&leaf((1, 4), (3, 4))), Linkage::Linked);
        assert_eq!(leaf((0, 1), (1, 4)).linked(&leaf((1, 2), (3, 4))), Linkage::Unlinked);
        assert_eq!(leaf((0, 1), (1, 2)).linked(&leaf((1, 2), (3, 4))), Linkage::SharedEndpoint);
        assert_eq!(leaf((1, 2), (0, 1)).linked(&leaf((0, 1), (1, 2))), Linkage::Equal);
        assert!(Leaf::from_ratios((1, 3), (1, 3), Sign::Plus).is_err());
    }

    #[test]
    fn triangle_regions() {
        let g = gaps(&triangle()).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.iter().filter(|r| r.kind == GapKind::Polygon { sides: 3 }).count(), 1);
        assert_eq!(g.iter().filter(|r| r.kind == GapKind::Undetermined && r.leaves.len() == 1).count(), 3);
    }

    #[test]
    fn trivial_regions() {
        assert_eq!(gaps(&[]).unwrap().len(), 1);
        let one = gaps(&[leaf((0, 1), (1, 2))]).unwrap();
        assert_eq!(one.len(), 2);
        assert!(one.iter().all(|r| r.kind == GapKind::Undetermined));
    }

    #[test]
    fn linked_input_is_rejected() {
        let err = gaps(&[leaf((0, 1), (1, 2)), leaf((1, 4), (3, 4))]).unwrap_err();
        assert!(matches!(err, ForgeError::NotLaminar(..)));
    }

    #[test]
    fn sweep_agrees_with_pairwise_check() {
        let ls = vec![
            leaf((0, 1), (1, 2)),
            leaf((0, 1), (1, 4)),
            leaf((1, 8), (1, 4)),
            leaf((1, 2), (3, 4)),
            leaf((5, 8), (11, 16)),
        ];
        assert!(find_linked_pair(&ls).is_none());
        let mut bad = ls.clone();
        bad.push(leaf((3, 16), (5, 8)));
        assert!(find_linked_pair(&bad).is_some());
    }

    #[test]
    fn classification_with_removed_sides() {
        let members = vec![leaf((0, 1), (1, 3)), leaf((1, 3), (2, 3))];
        let pivot = leaf((2, 3), (0, 1));
        let lam = AlmostLamination::explicit(Sign::Plus, members).with_removed(vec![pivot.clone()]);
        let gs = lam.classified_gaps(0).unwrap();
        assert!(gs.iter().any(|g| g.kind == GapKind::Cataclysm { pivot: pivot.clone() }));
        assert!(gs.iter().any(|g| g.kind == GapKind::HalfPlane { pivotal_side: pivot.clone() }));
        let tri = AlmostLamination::explicit(Sign::Plus, triangle());
        assert!(tri.classified_gaps(0).unwrap().iter().any(|g| g.kind == GapKind::Polygon { sides: 3 }));
    }

    #[test]
    fn half_plane_from_single_removed_leaf() {
        let lam = AlmostLamination::explicit(Sign::Plus, vec![]).with_removed(vec![leaf((0, 1), (1, 2))]);
        let gs = lam.classified_gaps(0).unwrap();
        assert_eq!(gs.iter().filter(|g| matches!(g.kind, GapKind::HalfPlane { .. })).count(), 2);
    }

    #[test]
    fn contradictory_declaration() {
        let lam =
            AlmostLamination::explicit(Sign::Plus, vec![leaf((0, 1), (1, 2))]).with_removed(vec![leaf((1, 4), (3, 4))]);
        assert!(matches!(lam.classified_gaps(0), Err(ForgeError::Contradiction(_))));
    }

    #[test]
    fn orientation_examples() {
        let w = orient(&triangle()).unwrap_err();
        assert_eq!(w.kind, GapKind::Polygon { sides: 3 });
        let o = orient(&square()).unwrap();
        assert_eq!(o.components(), 1);
        assert!(orientation_is_coherent(&square(), &o));
        assert!(orientation_is_coherent(&square(), &o.reversed()));
        assert!(orient(&[]).unwrap().is_empty());
    }

    #[test]
    fn ends_examples() {
        let e: Vec<CirclePoint> = ends(&triangle()).into_iter().collect();
        assert_eq!(e, vec![CirclePoint::ratio(0, 1), CirclePoint::ratio(1, 3), CirclePoint::ratio(2, 3)]);
        assert!(ends(&[]).is_empty());
        assert_eq!(ends(&[leaf((0, 1), (1, 2)), leaf((0, 1), (1, 4))]).len(), 3);
    }

    #[test]
    fn square_oracles() {
        let v = leaf((1, 8), (5, 8));
        assert!(square::is_vertical(&v));
        assert!(!square::is_horizontal(&v));
        assert!(square::is_horizontal(&leaf((3, 8), (7, 8))));
        assert!(!square::is_vertical(&leaf((1, 8), (1, 2))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random laminar families: nested/disjoint chords on 16 points.
        fn laminar() -> impl Strategy<Value = Vec<Leaf>> {
            proptest::collection::vec((0i64..16, 0i64..16), 0..10).prop_map(|pairs| {
                let mut out: Vec<Leaf> = Vec::new();
                for (a, b) in pairs {
                    if a == b {
                        continue;
                    }
                    let l = leaf((a, 16), (b, 16));
                    if out.iter().all(|m| !m.is_linked(&l) && !m.same_chord(&l)) {
                        out.push(l);
                    }
                }
                out
            })
        }

        proptest! {
            #[test]
            fn each_chord_bounds_two_regions(ls in laminar()) {
                let g = gaps(&ls).unwrap();
                let total: usize = g.iter().map(|r| r.leaves.len()).sum();
                prop_assert_eq!(total, 2 * ls.len());
                // Euler: regions = chords + 1 for a laminar family
                prop_assert_eq!(g.len(), ls.len() + 1);
            }

            #[test]
            fn orientations_count_matches_brute_force(ls in laminar()) {
                prop_assume!(ls.len() <= 8);
                let valid = (0u32..(1 << ls.len()))
                    .filter(|mask| {
                        let choices: Vec<bool> = (0..ls.len()).map(|i| mask >> i & 1 == 1).collect();
                        orientation_is_coherent(&ls, &Orientation::from_choices(&ls, &choices))
                    })
                    .count();
                match orient(&ls) {
                    Ok(o) => {
                        prop_assert!(orientation_is_coherent(&ls, &o));
                        prop_assert_eq!(valid, 1usize << o.components());
                    }
                    Err(_) => prop_assert_eq!(valid, 0),
                }
            }
        }
    }
}
