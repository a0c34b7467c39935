//! Finite-scale checks of the bifoliar conditions and of the axioms on the
//! circle action. Failures always carry a re-checkable witness.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::action::{BallElement, CircleHomeo, Expansion, GroupAction, GroupBall, Word};
use crate::circle::{CirclePoint, QuadraticNumber};
use crate::error::{ForgeError, Result};
use crate::lamination::{check_laminar, AlmostLamination, GapKind, GapReport, Leaf};

type Qn = QuadraticNumber;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    PassAtDepth(u32),
    Fail,
    Vacuous,
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub condition: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
}

impl Verdict {
    pub fn pass(condition: &str, depth: u32) -> Self {
        Verdict { condition: condition.into(), status: Status::PassAtDepth(depth), witness: None, note: String::new() }
    }

    pub fn fail(condition: &str, witness: Value) -> Self {
        Verdict { condition: condition.into(), status: Status::Fail, witness: Some(witness), note: String::new() }
    }

    pub fn vacuous(condition: &str) -> Self {
        Verdict { condition: condition.into(), status: Status::Vacuous, witness: None, note: String::new() }
    }

    pub fn truncated(condition: &str) -> Self {
        Verdict { condition: condition.into(), status: Status::Truncated, witness: None, note: String::new() }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn is_fail(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn is_pass(&self) -> bool {
        matches!(self.status, Status::PassAtDepth(_))
    }
}

/// Position of a crossing along a base leaf, increasing away from `base.lo()`.
/// Leaves through the same endpoint are ordered by their far endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CrossingKey {
    /// Counter-clockwise distance from `base.lo()` to the endpoint on the inner arc.
    pub at: Qn,
    far: Qn,
}

impl Ord for CrossingKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.at.cmp(&other.at).then_with(|| other.far.cmp(&self.far))
    }
}

impl PartialOrd for CrossingKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Position of the crossing of `l` along `base`, measured from `base.lo()`.
pub fn crossing_key(base: &Leaf, l: &Leaf) -> Option<CrossingKey> {
    if !base.is_linked(l) {
        return None;
    }
    let (p, q) = if base.inner_side(l.lo()) { (l.lo(), l.hi()) } else { (l.hi(), l.lo()) };
    Some(CrossingKey { at: base.lo().ccw_to(p), far: base.lo().ccw_to(q) })
}

/// The opposite-sign leaves linked with a base leaf, in crossing order.
#[derive(Clone, Debug)]
pub struct Thread {
    pub base: Leaf,
    pub members: Vec<Leaf>,
    keys: Vec<CrossingKey>,
}

impl Thread {
    pub fn new(base: &Leaf, candidates: &[Leaf]) -> Thread {
        let mut keyed: Vec<(CrossingKey, Leaf)> =
            candidates.iter().filter_map(|l| crossing_key(base, l).map(|k| (k, l.clone()))).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        let (keys, members) = keyed.into_iter().unzip();
        Thread { base: base.clone(), members, keys }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn key(&self, l: &Leaf) -> Option<CrossingKey> {
        crossing_key(&self.base, l)
    }

    pub fn position(&self, l: &Leaf) -> Option<usize> {
        let k = self.key(l)?;
        self.keys.binary_search(&k).ok()
    }

    /// Whether `l` crosses the base strictly between members `i` and `j`.
    pub fn strictly_inside(&self, l: &Leaf, i: usize, j: usize) -> bool {
        match self.key(l) {
            Some(k) => k > self.keys[i] && k < self.keys[j],
            None => false,
        }
    }

    pub fn interval(&self, i: usize, j: usize) -> IntervalInThread {
        IntervalInThread { base: self.base.clone(), min: self.members[i].clone(), max: self.members[j].clone() }
    }
}

/// A convex run of a thread, given by its extreme members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalInThread {
    pub base: Leaf,
    pub min: Leaf,
    pub max: Leaf,
}

impl IntervalInThread {
    pub fn contains(&self, l: &Leaf) -> bool {
        match (crossing_key(&self.base, l), crossing_key(&self.base, &self.min), crossing_key(&self.base, &self.max)) {
            (Some(k), Some(a), Some(b)) => k >= a && k <= b,
            _ => false,
        }
    }
}

/// Intervals `I⁺` (in a thread of a negative leaf) and `I⁻` (in a thread of a
/// positive leaf) whose members are pairwise linked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkingPair {
    pub plus: IntervalInThread,
    pub minus: IntervalInThread,
}

impl LinkingPair {
    pub fn is_linking(&self) -> bool {
        let ends = |i: &IntervalInThread| [i.min.clone(), i.max.clone()];
        ends(&self.plus).iter().all(|a| ends(&self.minus).iter().all(|b| a.is_linked(b)))
    }
}

/// Whether `x` lies strictly between the unlinked leaves `a` and `b`.
pub fn separates_leaves(x: &Leaf, a: &Leaf, b: &Leaf) -> bool {
    if x.same_chord(a) || x.same_chord(b) || x.is_linked(a) || x.is_linked(b) {
        return false;
    }
    let side =
        |l: &Leaf| -> Option<bool> { l.endpoints().into_iter().find(|p| !x.has_endpoint(p)).map(|p| x.inner_side(p)) };
    match (side(a), side(b)) {
        (Some(sa), Some(sb)) => sa != sb,
        _ => false,
    }
}

/// Whether the vertices of two polygons strictly alternate around the circle.
pub fn interleave(p: &[CirclePoint], q: &[CirclePoint]) -> bool {
    if p.len() != q.len() || p.is_empty() {
        return false;
    }
    let mut all: Vec<(&CirclePoint, u8)> = p.iter().map(|x| (x, 0)).chain(q.iter().map(|x| (x, 1))).collect();
    all.sort();
    if all.windows(2).any(|w| w[0].0 == w[1].0) {
        return false;
    }
    all.iter().enumerate().all(|(i, (_, s))| all[(i + 1) % all.len()].1 != *s)
}

fn leaf_json(l: &Leaf) -> Value {
    serde_json::to_value(l).expect("leaves serialize")
}

/// Gaps of one lamination with spurious outer regions of pivots dropped.
pub(crate) fn effective_gaps(src: &AlmostLamination, depth: u32) -> Result<Vec<GapReport>> {
    let gaps = src.classified_gaps(depth)?;
    let pivots: Vec<Leaf> = gaps
        .iter()
        .filter_map(|g| matches!(g.kind, GapKind::Cataclysm { .. }).then(|| g.kind.pivot().cloned()).flatten())
        .collect();
    Ok(gaps
        .into_iter()
        .filter(|g| match &g.kind {
            GapKind::HalfPlane { pivotal_side } => !pivots.iter().any(|p| p.same_chord(pivotal_side)),
            _ => true,
        })
        .collect())
}

fn max_gap(points: &BTreeSet<CirclePoint>) -> Option<(CirclePoint, CirclePoint, Qn)> {
    let v: Vec<&CirclePoint> = points.iter().collect();
    if v.is_empty() {
        return None;
    }
    let mut best: Option<(CirclePoint, CirclePoint, Qn)> = None;
    for i in 0..v.len() {
        let a = v[i];
        let b = v[(i + 1) % v.len()];
        let len = if v.len() == 1 { Qn::one() } else { a.ccw_to(b) };
        if best.as_ref().map_or(true, |(_, _, l)| &len > l) {
            best = Some((a.clone(), b.clone(), len));
        }
    }
    best
}

/// Union-find whose roots are always the smallest index, so results do not
/// depend on union order.
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let n = self.parent[c];
            self.parent[c] = r;
            c = n;
        }
        r
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Rejects shared chords between the two laminations.
pub fn check_transverse(plus: &AlmostLamination, minus: &AlmostLamination, depth: u32) -> Result<()> {
    let p = plus.enumerate(depth);
    let m = minus.enumerate(depth);
    check_laminar(&p)?;
    check_laminar(&m)?;
    for l in p.iter() {
        if m.iter().any(|x| x.same_chord(l)) || minus.contains(&l.with_sign(minus.sign)) {
            return Err(ForgeError::Inconsistent(format!("leaf {l:?} lies in both laminations")));
        }
    }
    for l in m.iter() {
        if plus.contains(&l.with_sign(plus.sign)) {
            return Err(ForgeError::Inconsistent(format!("leaf {l:?} lies in both laminations")));
        }
    }
    Ok(())
}

/// Conditions (i)–(vii) at the given depth.
pub fn bifoliar_report(plus: &AlmostLamination, minus: &AlmostLamination, depth: u32) -> Result<Vec<Verdict>> {
    check_transverse(plus, minus, depth)?;
    let p = plus.enumerate(depth);
    let m = minus.enumerate(depth);
    let mut out = Vec::with_capacity(7);

    // (i) density of ends
    let mut ends = plus.ends(depth);
    ends.extend(minus.ends(depth));
    let eps = Qn::from_ratio(1, 1i64 << depth.min(62));
    out.push(match max_gap(&ends) {
        Some((a, b, len)) if len > eps => Verdict::fail("i", json!({ "gap": [a, b], "length": len, "eps": eps }))
            .with_note(format!("ends leave an arc longer than 2^-{depth}")),
        Some(_) => Verdict::pass("i", depth),
        None => Verdict::fail("i", json!({ "gap": "whole circle" })),
    });

    // (ii) linkage graph connectivity
    let all: Vec<&Leaf> = p.iter().chain(m.iter()).collect();
    let mut uf = UnionFind::new(all.len());
    for i in 0..p.len() {
        for j in 0..m.len() {
            if p[i].is_linked(&m[j]) {
                uf.union(i, p.len() + j);
            }
        }
    }
    let split = (1..all.len()).find(|&i| uf.find(i) != uf.find(0));
    out.push(match (all.is_empty(), split) {
        (true, _) => Verdict::vacuous("ii"),
        (false, None) => Verdict::pass("ii", depth),
        (false, Some(i)) => Verdict::fail("ii", json!({ "disconnected": [leaf_json(all[0]), leaf_json(all[i])] })),
    });

    out.push(Verdict::vacuous("iii").with_note("finitely many enumerated leaves share any endpoint"));

    let gp = effective_gaps(plus, depth)?;
    let gm = effective_gaps(minus, depth)?;
    let determined: Vec<&GapReport> = gp.iter().chain(gm.iter()).filter(|g| g.kind.is_determined()).collect();

    // (iv) gap types
    let bad = determined.iter().find(|g| matches!(g.kind, GapKind::Crown { .. } | GapKind::BlownUpCrown { .. }));
    out.push(match (determined.is_empty(), bad) {
        (true, _) => Verdict::vacuous("iv"),
        (false, None) => Verdict::pass("iv", depth),
        (false, Some(g)) => Verdict::fail("iv", json!({ "gap": g })),
    });

    // (v) interleaving partners
    let polys = |gs: &[GapReport]| -> Vec<GapReport> { gs.iter().filter(|g| g.is_polygon()).cloned().collect() };
    let (pp, pm) = (polys(&gp), polys(&gm));
    let orphan = pp
        .iter()
        .find(|a| !pm.iter().any(|b| interleave(&a.vertices, &b.vertices)))
        .or_else(|| pm.iter().find(|a| !pp.iter().any(|b| interleave(&a.vertices, &b.vertices))));
    out.push(match (pp.is_empty() && pm.is_empty(), orphan) {
        (true, _) => Verdict::vacuous("v"),
        (false, None) => Verdict::pass("v", depth),
        (false, Some(g)) => Verdict::fail("v", json!({ "polygon": g.vertices })),
    });

    // (vi) no shared polygon sides
    let mut shared = None;
    'outer: for family in [&pp, &pm] {
        for (i, a) in family.iter().enumerate() {
            for b in &family[i + 1..] {
                if let Some(l) = a.leaves.iter().find(|l| b.leaves.iter().any(|x| x.same_chord(l))) {
                    shared = Some(json!({ "side": leaf_json(l), "polygons": [a.vertices, b.vertices] }));
                    break 'outer;
                }
            }
        }
    }
    out.push(match (pp.is_empty() && pm.is_empty(), shared) {
        (true, _) => Verdict::vacuous("vi"),
        (false, None) => Verdict::pass("vi", depth),
        (false, Some(w)) => Verdict::fail("vi", w),
    });

    // (vii) leaves through a cataclysm cross its pivot
    let mut any_cataclysm = false;
    let mut crossing = None;
    for (gaps, other) in [(&gp, &m), (&gm, &p)] {
        for g in gaps.iter() {
            let GapKind::Cataclysm { pivot } = &g.kind else { continue };
            any_cataclysm = true;
            if crossing.is_some() {
                continue;
            }
            let sides: Vec<&Leaf> = g.leaves.iter().filter(|l| !l.same_chord(pivot)).collect();
            if let Some(l) = other.iter().find(|l| sides.iter().any(|s| s.is_linked(l)) && !pivot.is_linked(l)) {
                crossing = Some(json!({ "leaf": leaf_json(l), "pivot": leaf_json(pivot), "sides": sides }));
            }
        }
    }
    out.push(match (any_cataclysm, crossing) {
        (false, _) => Verdict::vacuous("vii"),
        (true, None) => Verdict::pass("vii", depth),
        (true, Some(w)) => Verdict::fail("vii", w),
    });
    Ok(out)
}

/// Re-checks a failing bifoliar witness from its payload alone.
pub fn replay_bifoliar(v: &Verdict, plus: &AlmostLamination, minus: &AlmostLamination, depth: u32) -> Result<bool> {
    let w = v.witness.as_ref().ok_or_else(|| ForgeError::Precondition("verdict has no witness".into()))?;
    let leaf = |k: &str| -> Result<Leaf> {
        serde_json::from_value(w[k].clone()).map_err(|e| ForgeError::Parse(format!("witness field {k}: {e}")))
    };
    match v.condition.as_str() {
        "vi" => {
            let side = leaf("side")?;
            let polys: Vec<Vec<CirclePoint>> = serde_json::from_value(w["polygons"].clone())
                .map_err(|e| ForgeError::Parse(format!("witness polygons: {e}")))?;
            let mut found = 0;
            for src in [plus, minus] {
                for g in effective_gaps(src, depth)? {
                    if g.is_polygon() && polys.contains(&g.vertices) && g.leaves.iter().any(|l| l.same_chord(&side)) {
                        found += 1;
                    }
                }
            }
            Ok(found == 2)
        }
        "vii" => {
            let l = leaf("leaf")?;
            let pivot = leaf("pivot")?;
            let sides: Vec<Leaf> = serde_json::from_value(w["sides"].clone())
                .map_err(|e| ForgeError::Parse(format!("witness sides: {e}")))?;
            let is_pivot = [plus, minus].iter().any(|s| s.removed_sides.iter().any(|r| r.same_chord(&pivot)));
            Ok(is_pivot && sides.iter().any(|s| s.is_linked(&l)) && !pivot.is_linked(&l))
        }
        other => Err(ForgeError::Precondition(format!("no replay for condition {other}"))),
    }
}

/// Images of the enumerated leaves under every ball element, computed once.
pub struct Snapshot {
    pub depth: u32,
    pub radius: u32,
    pub plus: Vec<Leaf>,
    pub minus: Vec<Leaf>,
    pub ball: std::sync::Arc<GroupBall>,
    images_plus: Vec<Vec<Leaf>>,
    images_minus: Vec<Vec<Leaf>>,
    /// Indices of leaves already present at the coarser core depth.
    core_plus: Vec<usize>,
    core_minus: Vec<usize>,
}

/// Depth whose leaves serve as base points of displacement searches.
pub fn core_depth(depth: u32) -> u32 {
    depth.saturating_sub(2).max(1).min(depth)
}

fn core_indices(src: &AlmostLamination, all: &[Leaf], depth: u32) -> Vec<usize> {
    let core = src.enumerate(core_depth(depth));
    core.iter().filter_map(|l| all.binary_search(l).ok()).collect()
}

impl Snapshot {
    pub fn new(
        action: &GroupAction,
        plus: &AlmostLamination,
        minus: &AlmostLamination,
        depth: u32,
        radius: u32,
    ) -> Self {
        let ball = action.ball(radius);
        let p = plus.enumerate(depth).to_vec();
        let m = minus.enumerate(depth).to_vec();
        let img = |ls: &[Leaf]| -> Vec<Vec<Leaf>> {
            ball.elements.iter().map(|e| ls.iter().map(|l| e.map.apply_leaf(l)).collect()).collect()
        };
        let images_plus = img(&p);
        let images_minus = img(&m);
        let core_plus = core_indices(plus, &p, depth);
        let core_minus = core_indices(minus, &m, depth);
        Snapshot { depth, radius, plus: p, minus: m, ball, images_plus, images_minus, core_plus, core_minus }
    }

    fn word(&self, e: usize) -> String {
        self.ball.render(&self.ball.elements[e].word)
    }

    /// Indices of linked pairs `(plus, minus)` fixed by element `e`.
    fn fixed_pairs(&self, e: usize) -> Vec<(usize, usize)> {
        let fp: Vec<usize> =
            (0..self.plus.len()).filter(|&i| self.images_plus[e][i].same_chord(&self.plus[i])).collect();
        let fm: Vec<usize> =
            (0..self.minus.len()).filter(|&j| self.images_minus[e][j].same_chord(&self.minus[j])).collect();
        let mut out = Vec::new();
        for &i in &fp {
            for &j in &fm {
                if self.plus[i].is_linked(&self.minus[j]) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// How `g` moves the thread of `base` around its fixed member `fixed`.
fn thread_dynamics(g: &CircleHomeo, thread: &Thread, fixed: usize) -> Expansion {
    let k0 = thread.keys[fixed].at.clone();
    for nb in [fixed.checked_sub(1), Some(fixed + 1)].into_iter().flatten() {
        let Some(l) = thread.members.get(nb) else { continue };
        let Some(k) = thread.key(&g.apply_leaf(l)) else { continue };
        let before = (&thread.keys[nb].at - &k0).abs();
        let after = (&k.at - &k0).abs();
        if after > before {
            return Expansion::Expands;
        }
        if after < before {
            return Expansion::Contracts;
        }
    }
    Expansion::Neither
}

/// Stabilizers in the ball of enumerated linked pairs, keyed by index pair.
fn stabilizers(s: &Snapshot) -> BTreeMap<(usize, usize), Vec<usize>> {
    let mut out: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (e, el) in s.ball.elements.iter().enumerate() {
        if el.word.is_empty() {
            continue;
        }
        for pair in s.fixed_pairs(e) {
            out.entry(pair).or_default().push(e);
        }
    }
    out
}

/// Sides of determined polygons, per lamination.
fn polygon_sides(src: &AlmostLamination, depth: u32) -> Result<Vec<Leaf>> {
    Ok(effective_gaps(src, depth)?.into_iter().filter(|g| g.is_polygon()).flat_map(|g| g.leaves).collect())
}

fn check_b1(s: &Snapshot, stab: &BTreeMap<(usize, usize), Vec<usize>>) -> Verdict {
    if stab.is_empty() {
        return Verdict::vacuous("B1").with_note("no ball element fixes an enumerated linked pair");
    }
    let mut threads_p: BTreeMap<usize, Thread> = BTreeMap::new();
    let mut threads_m: BTreeMap<usize, Thread> = BTreeMap::new();
    for (&(i, j), elems) in stab {
        let tp = threads_p.entry(i).or_insert_with(|| Thread::new(&s.plus[i], &s.minus));
        let tm = threads_m.entry(j).or_insert_with(|| Thread::new(&s.minus[j], &s.plus));
        for &e in elems {
            let g = &s.ball.elements[e].map;
            let fixed_m: Vec<&Leaf> = tp.members.iter().filter(|l| g.apply_leaf(l).same_chord(l)).collect();
            let fixed_p: Vec<&Leaf> = tm.members.iter().filter(|l| g.apply_leaf(l).same_chord(l)).collect();
            if fixed_m.len() > 1 || fixed_p.len() > 1 {
                return Verdict::fail(
                    "B1",
                    json!({ "word": s.word(e), "thread_of": leaf_json(if fixed_m.len() > 1 { &s.plus[i] } else { &s.minus[j] }),
                            "fixed": if fixed_m.len() > 1 { fixed_m } else { fixed_p } }),
                )
                .with_note("element fixes two members of one thread");
            }
            let along_plus = thread_dynamics(g, tp, tp.position(&s.minus[j]).expect("fixed member lies in the thread"));
            let along_minus = thread_dynamics(g, tm, tm.position(&s.plus[i]).expect("fixed member lies in the thread"));
            let opposite = matches!(
                (along_plus, along_minus),
                (Expansion::Expands, Expansion::Contracts) | (Expansion::Contracts, Expansion::Expands)
            );
            // a finite-order element fixing the pair is caught by the stabilizer check
            if !opposite && along_plus != Expansion::Neither && along_minus != Expansion::Neither {
                return Verdict::fail(
                    "B1",
                    json!({ "word": s.word(e), "pair": [leaf_json(&s.plus[i]), leaf_json(&s.minus[j])],
                            "along_plus": along_plus, "along_minus": along_minus }),
                )
                .with_note("element does not expand one thread while contracting the other");
            }
        }
    }
    Verdict::pass("B1", s.depth)
}

/// Whether `h` equals `s^k` for some `0 < |k| ≤ bound`.
fn is_power(h: &CircleHomeo, s: &CircleHomeo, bound: u32) -> Option<i64> {
    let sig = h.probe_signature();
    let inv = s.inverse();
    let (mut pos, mut neg) = (s.clone(), inv.clone());
    for k in 1..=bound as i64 {
        if pos.probe_signature() == sig {
            return Some(k);
        }
        if neg.probe_signature() == sig {
            return Some(-k);
        }
        pos = pos.compose(s);
        neg = neg.compose(&inv);
    }
    None
}

fn check_b4(
    s: &Snapshot,
    stab: &BTreeMap<(usize, usize), Vec<usize>>,
    sing_plus: &[Leaf],
    sing_minus: &[Leaf],
) -> Verdict {
    for (&(i, j), elems) in stab {
        let shortest = elems.iter().min_by_key(|&&e| (s.ball.elements[e].word.len(), e)).copied().expect("nonempty");
        let sm = &s.ball.elements[shortest].map;
        for &e in elems {
            if e == shortest {
                continue;
            }
            if is_power(&s.ball.elements[e].map, sm, 2 * s.radius).is_none() {
                return Verdict::fail(
                    "B4",
                    json!({ "pair": [leaf_json(&s.plus[i]), leaf_json(&s.minus[j])],
                            "generator": s.word(shortest), "not_a_power": s.word(e) }),
                )
                .with_note("stabilizer is not cyclic");
            }
        }
    }
    for (i, lp) in s.plus.iter().enumerate() {
        if !sing_plus.iter().any(|x| x.same_chord(lp)) {
            continue;
        }
        for (j, lm) in s.minus.iter().enumerate() {
            if sing_minus.iter().any(|x| x.same_chord(lm)) && lp.is_linked(lm) && !stab.contains_key(&(i, j)) {
                return Verdict::fail("B4", json!({ "pair": [leaf_json(lp), leaf_json(lm)], "stabilizer": "trivial" }))
                    .with_note("a pair of singular leaves needs a nontrivial stabilizer");
            }
        }
    }
    if stab.is_empty() {
        return Verdict::vacuous("B4").with_note("every sampled stabilizer is trivial");
    }
    Verdict::pass("B4", s.depth)
}

/// Linking pairs made from thread neighbours of each enumerated crossing.
pub fn linking_grid(plus: &[Leaf], minus: &[Leaf], width: usize) -> Vec<LinkingPair> {
    let mut out = Vec::new();
    for lp in plus {
        let tp = Thread::new(lp, minus);
        for (j, lm) in tp.members.iter().enumerate() {
            if j < width || j + width >= tp.len() {
                continue;
            }
            let tm = Thread::new(lm, plus);
            let Some(i) = tm.position(lp) else { continue };
            if i < width || i + width >= tm.len() {
                continue;
            }
            let pair =
                LinkingPair { plus: tm.interval(i - width, i + width), minus: tp.interval(j - width, j + width) };
            if pair.is_linking() {
                out.push(pair);
            }
        }
    }
    out
}

fn leaf_between_or_equal(x: &Leaf, a: &Leaf, b: &Leaf) -> bool {
    x.same_chord(a) || x.same_chord(b) || separates_leaves(x, a, b)
}

fn check_b2(s: &Snapshot, grid: &[LinkingPair]) -> Verdict {
    if s.ball.nontrivial().next().is_none() {
        return Verdict::fail("B2", json!({ "reason": "the ball has no nontrivial element" }));
    }
    if grid.is_empty() {
        return Verdict::vacuous("B2").with_note("no linking pairs at this depth");
    }
    // candidate base pairs: the centres of the grid
    for cand in grid.iter().take(16) {
        let (bp, bm) = (&cand.minus.base, &cand.plus.base);
        let hits = grid.iter().all(|lp| {
            s.ball
                .nontrivial()
                .any(|e| lp.plus.contains(&e.map.apply_leaf(bp)) && lp.minus.contains(&e.map.apply_leaf(bm)))
        });
        if hits {
            return Verdict::pass("B2", s.depth)
                .with_note(format!("orbit of one linked pair meets all {} sampled linking pairs", grid.len()));
        }
    }
    Verdict::truncated("B2").with_note("no sampled orbit meets every sampled linking pair inside the ball")
}

fn contracts_into(g: &CircleHomeo, lp: &LinkingPair) -> bool {
    let img = |l: &Leaf| g.apply_leaf(l);
    let (pa, pb) = (&lp.plus.min, &lp.plus.max);
    let (ma, mb) = (&lp.minus.min, &lp.minus.max);
    let plus_in = leaf_between_or_equal(&img(pa), pa, pb) && leaf_between_or_equal(&img(pb), pa, pb);
    let minus_out = leaf_between_or_equal(ma, &img(ma), &img(mb)) && leaf_between_or_equal(mb, &img(ma), &img(mb));
    let minus_in = leaf_between_or_equal(&img(ma), ma, mb) && leaf_between_or_equal(&img(mb), ma, mb);
    let plus_out = leaf_between_or_equal(pa, &img(pa), &img(pb)) && leaf_between_or_equal(pb, &img(pa), &img(pb));
    (plus_in && minus_out) || (minus_in && plus_out)
}

fn check_b3(s: &Snapshot, grid: &[LinkingPair]) -> Verdict {
    if s.ball.nontrivial().next().is_none() {
        return Verdict::fail("B3", json!({ "reason": "the ball has no nontrivial element" }));
    }
    if grid.is_empty() {
        return Verdict::vacuous("B3").with_note("no linking pairs at this depth");
    }
    let missing = grid.iter().filter(|lp| !s.ball.nontrivial().any(|e| contracts_into(&e.map, lp))).count();
    if missing == 0 {
        Verdict::pass("B3", s.depth)
            .with_note(format!("all {} sampled linking pairs have a contracting element", grid.len()))
    } else {
        Verdict::truncated("B3")
            .with_note(format!("{missing} of {} sampled linking pairs found no element", grid.len()))
    }
}

fn check_b5(s: &Snapshot, plus: &AlmostLamination, minus: &AlmostLamination) -> Result<Verdict> {
    let mut pairs = Vec::new();
    for src in [plus, minus] {
        for g in effective_gaps(src, s.depth)? {
            if let GapKind::Cataclysm { pivot } = &g.kind {
                let sides: Vec<Leaf> = g.leaves.iter().filter(|l| !l.same_chord(pivot)).cloned().collect();
                for (i, a) in sides.iter().enumerate() {
                    for b in &sides[i + 1..] {
                        pairs.push((a.clone(), b.clone()));
                    }
                }
            }
        }
    }
    if pairs.is_empty() {
        return Ok(Verdict::vacuous("B5"));
    }
    let trivial = s.ball.nontrivial().next().is_none();
    for (a, b) in &pairs {
        let found = s.ball.nontrivial().any(|e| e.map.apply_leaf(a).same_chord(a) && e.map.apply_leaf(b).same_chord(b));
        if !found {
            return Ok(if trivial {
                Verdict::fail("B5", json!({ "sides": [leaf_json(a), leaf_json(b)], "reason": "no nontrivial element" }))
            } else {
                Verdict::truncated("B5").with_note("no element in the ball fixes both sides")
            });
        }
    }
    Ok(Verdict::pass("B5", s.depth))
}

/// Closed alternating chains `x₁ … x₂ₙ` with `{x₁,x₂}` positive,
/// `{x₂,x₃}` negative, and so on, for `n ≤ max_n`.
pub fn ideal_chains(plus: &[Leaf], minus: &[Leaf], max_n: usize) -> Vec<Vec<CirclePoint>> {
    let mut adj: BTreeMap<&CirclePoint, [Vec<&CirclePoint>; 2]> = BTreeMap::new();
    for (c, ls) in [(0usize, plus), (1, minus)] {
        for l in ls {
            adj.entry(l.lo()).or_default()[c].push(l.hi());
            adj.entry(l.hi()).or_default()[c].push(l.lo());
        }
    }
    let mut found: BTreeSet<Vec<CirclePoint>> = BTreeSet::new();
    fn walk<'a>(
        adj: &BTreeMap<&'a CirclePoint, [Vec<&'a CirclePoint>; 2]>,
        path: &mut Vec<&'a CirclePoint>,
        max_len: usize,
        found: &mut BTreeSet<Vec<CirclePoint>>,
    ) {
        let colour = (path.len() - 1) % 2;
        let last = *path.last().unwrap();
        for &next in &adj[last][colour] {
            if next == path[0] && colour == 1 && path.len() >= 4 {
                let mut cyc: Vec<CirclePoint> = path.iter().map(|p| (*p).clone()).collect();
                let min = cyc.iter().enumerate().min_by(|a, b| a.1.cmp(b.1)).map(|(i, _)| i).unwrap();
                cyc.rotate_left(min);
                let mut rev = cyc.clone();
                rev[1..].reverse();
                found.insert(cyc.min(rev));
                continue;
            }
            if path.len() < max_len && !path.contains(&next) {
                path.push(next);
                walk(adj, path, max_len, found);
                path.pop();
            }
        }
    }
    for &start in adj.keys() {
        let mut path = vec![start];
        walk(&adj, &mut path, 2 * max_n, &mut found);
    }
    found.into_iter().collect()
}

fn check_b6(s: &Snapshot) -> Verdict {
    let chains: Vec<_> = ideal_chains(&s.plus, &s.minus, 2).into_iter().filter(|c| c.len() == 4).collect();
    match chains.first() {
        None => Verdict::pass("B6", s.depth),
        Some(c) => Verdict::fail("B6", json!({ "chain": c })),
    }
}

/// Axioms (B1)–(B6) at the given depth and ball radius.
pub fn anosov_like_report(
    action: &GroupAction,
    plus: &AlmostLamination,
    minus: &AlmostLamination,
    depth: u32,
    radius: u32,
) -> Result<Vec<Verdict>> {
    let s = Snapshot::new(action, plus, minus, depth, radius);
    let stab = stabilizers(&s);
    let grid = linking_grid(&s.plus, &s.minus, 1);
    let sample: Vec<LinkingPair> = grid.iter().step_by((grid.len() / 64).max(1)).cloned().collect();
    Ok(vec![
        check_b1(&s, &stab),
        check_b2(&s, &sample).with_note_if_empty("falsification only"),
        check_b3(&s, &sample).with_note_if_empty("falsification only"),
        check_b4(&s, &stab, &polygon_sides(plus, depth)?, &polygon_sides(minus, depth)?),
        check_b5(&s, plus, minus)?,
        check_b6(&s),
    ])
}

impl Verdict {
    fn with_note_if_empty(self, note: &str) -> Self {
        if self.note.is_empty() {
            self.with_note(note)
        } else {
            self
        }
    }
}

/// Thresholds of the simultaneous-displacement search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearTolerance {
    /// Largest endpoint displacement along the circle.
    pub arc: Qn,
    /// Largest number of enumerated leaves strictly between a leaf and its image.
    pub between: usize,
}

impl NearTolerance {
    pub fn new(arc: Qn) -> Self {
        NearTolerance { arc, between: 0 }
    }
}

fn arc_close(a: &Leaf, b: &Leaf, eps: &Qn) -> bool {
    let d = |x: &CirclePoint, y: &CirclePoint| x.arc_distance(y);
    (&d(a.lo(), b.lo()) <= eps && &d(a.hi(), b.hi()) <= eps) || (&d(a.lo(), b.hi()) <= eps && &d(a.hi(), b.lo()) <= eps)
}

/// Whether the image of `l` is close to `l` in both proxies.
pub fn leaf_near(l: &Leaf, image: &Leaf, family: &[Leaf], tol: &NearTolerance) -> bool {
    if l.same_chord(image) {
        return true;
    }
    if l.is_linked(image) || !arc_close(l, image, &tol.arc) {
        return false;
    }
    family.iter().filter(|x| separates_leaves(x, l, image)).take(tol.between + 1).count() <= tol.between
}

/// Outcome of the displacement search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum B7Outcome {
    NoViolationUpTo { radius: u32, arc: Qn, between: usize, triples: usize },
    Witness { word: String, base: Leaf, first: Leaf, second: Leaf },
}

/// Searches the ball for a nontrivial element moving a base leaf and two
/// members of its thread only slightly, in both roles of the laminations.
pub fn b7_falsifier(s: &Snapshot, tol: &NearTolerance) -> B7Outcome {
    let mut triples = 0usize;
    for role in 0..2 {
        let (base, other, img_base, img_other, core_base, core_other) = if role == 0 {
            (&s.plus, &s.minus, &s.images_plus, &s.images_minus, &s.core_plus, &s.core_minus)
        } else {
            (&s.minus, &s.plus, &s.images_minus, &s.images_plus, &s.core_minus, &s.core_plus)
        };
        let threads: Vec<Vec<usize>> = core_base
            .iter()
            .map(|&i| core_other.iter().copied().filter(|&j| base[i].is_linked(&other[j])).collect())
            .collect();
        triples += threads.iter().map(|t| t.len() * t.len().saturating_sub(1) / 2).sum::<usize>();
        for (e, el) in s.ball.elements.iter().enumerate() {
            if el.word.is_empty() {
                continue;
            }
            let near_other: Vec<bool> = (0..other.len())
                .map(|j| core_other.binary_search(&j).is_ok() && leaf_near(&other[j], &img_other[e][j], other, tol))
                .collect();
            if !near_other.iter().any(|&b| b) {
                continue;
            }
            for (t, &i) in core_base.iter().enumerate() {
                let close: Vec<usize> = threads[t].iter().copied().filter(|&j| near_other[j]).collect();
                if close.len() < 2 || !leaf_near(&base[i], &img_base[e][i], base, tol) {
                    continue;
                }
                return B7Outcome::Witness {
                    word: s.word(e),
                    base: base[i].clone(),
                    first: other[close[0]].clone(),
                    second: other[close[1]].clone(),
                };
            }
        }
    }
    B7Outcome::NoViolationUpTo { radius: s.radius, arc: tol.arc.clone(), between: tol.between, triples }
}

/// Re-checks a displacement witness against the enumerated families.
pub fn replay_b7(action: &GroupAction, s: &Snapshot, tol: &NearTolerance, outcome: &B7Outcome) -> Result<bool> {
    let B7Outcome::Witness { word, base, first, second } = outcome else {
        return Ok(false);
    };
    let w = Word::parse(word, &action.names)?;
    let g = action.eval_word(&w);
    if w.is_empty() || g.is_identity() {
        return Ok(false);
    }
    let (bf, of) = if s.plus.contains(base) { (&s.plus, &s.minus) } else { (&s.minus, &s.plus) };
    Ok(base.is_linked(first)
        && base.is_linked(second)
        && !first.same_chord(second)
        && leaf_near(base, &g.apply_leaf(base), bf, tol)
        && leaf_near(first, &g.apply_leaf(first), of, tol)
        && leaf_near(second, &g.apply_leaf(second), of, tol))
}

/// (B1), (B4) and (B7): the properties needed to build a flow.
pub fn flowable_report(
    action: &GroupAction,
    plus: &AlmostLamination,
    minus: &AlmostLamination,
    depth: u32,
    radius: u32,
    tol: &NearTolerance,
) -> Result<Vec<Verdict>> {
    let s = Snapshot::new(action, plus, minus, depth, radius);
    let stab = stabilizers(&s);
    let b1 = check_b1(&s, &stab);
    let b4 = check_b4(&s, &stab, &polygon_sides(plus, depth)?, &polygon_sides(minus, depth)?);
    let b7 = match b7_falsifier(&s, tol) {
        B7Outcome::NoViolationUpTo { triples, .. } if triples == 0 => Verdict::vacuous("B7"),
        B7Outcome::NoViolationUpTo { radius, arc, between, triples } => Verdict::pass("B7", depth).with_note(format!(
            "no violation up to radius {radius}, arc {arc}, {between} leaves between, {triples} triples"
        )),
        w @ B7Outcome::Witness { .. } => Verdict::fail("B7", serde_json::to_value(&w).expect("serializable")),
    };
    Ok(vec![b1, b4, b7])
}

/// Overall flowable status: pass only if nothing fails.
pub fn overall(verdicts: &[Verdict]) -> bool {
    !verdicts.iter().any(Verdict::is_fail)
}

/// The elements of the ball other than the identity, for callers that only
/// need words and maps.
pub fn nontrivial_elements(ball: &GroupBall) -> Vec<&BallElement> {
    ball.nontrivial().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::lamination::Sign;

    fn pt(n: i64, d: i64) -> CirclePoint {
        CirclePoint::ratio(n, d)
    }

    #[test]
    fn interleaving_is_combinatorial() {
        let sq: Vec<CirclePoint> = (0..4).map(|k| pt(k, 4)).collect();
        let odd: Vec<CirclePoint> = [1, 3, 5, 7].iter().map(|&k| pt(k, 8)).collect();
        assert!(interleave(&sq, &odd));
        assert!(!interleave(&sq, &sq));
        let skew = vec![pt(1, 16), pt(3, 8), pt(5, 8), pt(7, 8)];
        assert!(interleave(&sq, &skew));
        assert!(!interleave(&sq, &odd[..3]));
    }

    #[test]
    fn square_fixture_passes_polygon_conditions() {
        let ex = gallery::square_pair();
        let r = bifoliar_report(&ex.plus, &ex.minus, 2).unwrap();
        for c in ["iv", "v", "vi"] {
            assert!(r.iter().find(|v| v.condition == c).unwrap().is_pass(), "{c}: {r:?}");
        }
    }

    #[test]
    fn shared_side_fails_vi_with_replayable_witness() {
        let ex = gallery::shared_side_pair();
        let r = bifoliar_report(&ex.plus, &ex.minus, 1).unwrap();
        let vi = r.iter().find(|v| v.condition == "vi").unwrap();
        assert!(vi.is_fail());
        assert_eq!(
            vi.witness.as_ref().unwrap()["side"],
            leaf_json(&Leaf::from_ratios((0, 1), (1, 2), Sign::Plus).unwrap())
        );
        assert!(replay_bifoliar(vi, &ex.plus, &ex.minus, 1).unwrap());
    }

    #[test]
    fn cataclysm_condition() {
        let ok = gallery::cataclysm_fixture(false);
        let r = bifoliar_report(&ok.plus, &ok.minus, 1).unwrap();
        assert!(r.iter().find(|v| v.condition == "vii").unwrap().is_pass());
        assert!(r.iter().find(|v| v.condition == "iv").unwrap().is_pass());
        let bad = gallery::cataclysm_fixture(true);
        let r = bifoliar_report(&bad.plus, &bad.minus, 1).unwrap();
        let vii = r.iter().find(|v| v.condition == "vii").unwrap();
        assert!(vii.is_fail());
        assert!(replay_bifoliar(vii, &bad.plus, &bad.minus, 1).unwrap());
    }

    #[test]
    fn shared_chord_is_rejected() {
        let l = Leaf::from_ratios((0, 1), (1, 2), Sign::Plus).unwrap();
        let p = AlmostLamination::explicit(Sign::Plus, vec![l.clone()]);
        let m = AlmostLamination::explicit(Sign::Minus, vec![l]);
        assert!(bifoliar_report(&p, &m, 1).is_err());
    }

    #[test]
    fn separation_between_parallel_chords() {
        let a = Leaf::from_ratios((1, 8), (5, 8), Sign::Plus).unwrap();
        let x = Leaf::from_ratios((3, 16), (9, 16), Sign::Plus).unwrap();
        let b = Leaf::from_ratios((1, 4), (1, 2), Sign::Plus).unwrap();
        assert!(separates_leaves(&x, &a, &b));
        assert!(!separates_leaves(&a, &x, &b));
    }

    #[test]
    fn chains_through_shared_endpoints() {
        let plus = vec![
            Leaf::from_ratios((0, 1), (1, 4), Sign::Plus).unwrap(),
            Leaf::from_ratios((1, 2), (3, 4), Sign::Plus).unwrap(),
        ];
        let minus = vec![
            Leaf::from_ratios((1, 4), (1, 2), Sign::Minus).unwrap(),
            Leaf::from_ratios((3, 4), (0, 1), Sign::Minus).unwrap(),
        ];
        let c = ideal_chains(&plus, &minus, 4);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 4);
        assert!(ideal_chains(&plus[..1], &minus, 4).is_empty());
    }

    #[test]
    fn identity_action_b3_fails_and_b1_vacuous() {
        let ex = gallery::square_pair();
        let r = anosov_like_report(&GroupAction::trivial(), &ex.plus, &ex.minus, 1, 2).unwrap();
        assert_eq!(r[0].status, Status::Vacuous);
        assert!(r[2].is_fail());
        // both polygons are singular, and nothing stabilizes their sides
        assert!(r[3].is_fail());
    }

    #[test]
    fn fixing_two_thread_members_fails_b1() {
        // the square of the prong map fixes every k/8
        let f = gallery::prong_fixture(4).unwrap();
        let g = f.example.action.generators[0].compose(&f.example.action.generators[0]);
        let action = GroupAction::new(0, vec!["h".into()], vec![g]);
        let plus = AlmostLamination::explicit(Sign::Plus, vec![Leaf::from_ratios((1, 8), (5, 8), Sign::Plus).unwrap()]);
        let minus = AlmostLamination::explicit(
            Sign::Minus,
            vec![
                Leaf::from_ratios((0, 1), (1, 4), Sign::Minus).unwrap(),
                Leaf::from_ratios((0, 1), (1, 2), Sign::Minus).unwrap(),
            ],
        );
        let plus = plus.with_action(std::sync::Arc::new(action.clone()));
        let minus = minus.with_action(std::sync::Arc::new(action.clone()));
        let s = Snapshot::new(&action, &plus, &minus, 1, 1);
        let v = check_b1(&s, &stabilizers(&s));
        assert!(v.is_fail(), "{v:?}");
    }
}
