//! The flow space over a bifoliated plane: monotone collapses along singular
//! leaves, positive rays, the space N with its group action, freeness
//! sampling and the identification of transverse leaves from chart plaques.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::action::{CircleHomeo, GroupAction};
use crate::certify::LeafSpaceMetric;
use crate::circle::{CirclePoint, QuadraticNumber as Qn};
use crate::error::{ForgeError, Result};
use crate::lamination::{AlmostLamination, Leaf, Orientation};
use crate::plane::PlaneApprox;
use crate::verify::{core_depth, crossing_key, interleave, UnionFind};

/// One half-leaf of a singular leaf.
///
/// A point on the prong is recorded by the endpoint of the transverse leaf
/// through it that lies in the arc from `inner` (a vertex of the opposite
/// polygon) to `outer` (the polygon vertex the prong runs to).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prong {
    pub positive: bool,
    pub inner: CirclePoint,
    pub outer: CirclePoint,
}

impl Prong {
    fn span(&self) -> Qn {
        self.inner.ccw_to(&self.outer)
    }

    /// Distance from the singular end, for points strictly inside the arc.
    pub fn position(&self, p: &CirclePoint) -> Option<Qn> {
        let pos = self.inner.ccw_to(p);
        (pos.sign() > 0 && pos < self.span()).then_some(pos)
    }

    pub fn point_at(&self, pos: &Qn) -> CirclePoint {
        self.inner.offset(pos)
    }
}

/// The star of half-leaves left by collapsing an interleaved polygon pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularLeaf {
    pub prongs: Vec<Prong>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LeafPoint {
    Singularity,
    Prong { index: usize, at: CirclePoint },
}

impl SingularLeaf {
    /// Prongs run to the vertices of `own` in counter-clockwise order,
    /// positive and negative in turn from the smallest angle.
    pub fn from_polygons(own: &[CirclePoint], other: &[CirclePoint]) -> Result<Self> {
        let mut v = own.to_vec();
        v.sort();
        v.dedup();
        let mut w = other.to_vec();
        w.sort();
        w.dedup();
        if v.len() < 4 || v.len() % 2 == 1 || v.len() != w.len() || !interleave(&v, &w) {
            return Err(ForgeError::Precondition(
                "a singular leaf needs interleaved polygons with the same even number (at least 4) of vertices".into(),
            ));
        }
        let prongs = v
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let i = w.partition_point(|y| y < x);
                Prong { positive: k % 2 == 0, inner: w[(i + w.len() - 1) % w.len()].clone(), outer: x.clone() }
            })
            .collect();
        Ok(SingularLeaf { prongs })
    }

    pub fn half_leaves(&self) -> usize {
        self.prongs.len()
    }

    pub fn locate(&self, p: &CirclePoint) -> Option<LeafPoint> {
        self.prongs
            .iter()
            .position(|pr| pr.position(p).is_some())
            .map(|index| LeafPoint::Prong { index, at: p.clone() })
    }

    pub fn position(&self, x: &LeafPoint) -> Option<Qn> {
        match x {
            LeafPoint::Singularity => Some(Qn::zero()),
            LeafPoint::Prong { index, at } => self.prongs.get(*index)?.position(at),
        }
    }

    pub fn is_positive(&self, x: &LeafPoint) -> Option<bool> {
        match x {
            LeafPoint::Singularity => None,
            LeafPoint::Prong { index, .. } => Some(self.prongs[*index].positive),
        }
    }

    /// The prong permutation induced by `g`; fails unless `g` maps the
    /// star onto itself preserving prong signs.
    pub fn permutation(&self, g: &CircleHomeo) -> Result<Vec<usize>> {
        let mut perm = Vec::with_capacity(self.prongs.len());
        for (j, p) in self.prongs.iter().enumerate() {
            let (gi, go) = (g.apply(&p.inner), g.apply(&p.outer));
            let k = self.prongs.iter().position(|q| q.inner == gi && q.outer == go).ok_or_else(|| {
                ForgeError::Precondition(format!(
                    "the map does not stabilize the singular leaf (prong {j} leaves the star)"
                ))
            })?;
            if self.prongs[k].positive != p.positive {
                return Err(ForgeError::NonOrientable(format!(
                    "the map sends prong {j} to prong {k} of opposite sign"
                )));
            }
            perm.push(k);
        }
        Ok(perm)
    }

    pub fn apply(&self, g: &CircleHomeo, perm: &[usize], x: &LeafPoint) -> LeafPoint {
        match x {
            LeafPoint::Singularity => LeafPoint::Singularity,
            LeafPoint::Prong { index, at } => LeafPoint::Prong { index: perm[*index], at: g.apply(at) },
        }
    }

    /// Whether `y` lies on the positive ray `R_x` of `x`.
    pub fn in_ray(&self, x: &LeafPoint, y: &LeafPoint) -> bool {
        let n = self.prongs.len();
        match (x, y) {
            (LeafPoint::Singularity, LeafPoint::Prong { index, .. }) => self.prongs[*index].positive,
            (LeafPoint::Singularity, LeafPoint::Singularity) => false,
            (LeafPoint::Prong { index: i, at: a }, y) => {
                let pa = self.prongs[*i].position(a);
                if self.prongs[*i].positive {
                    match y {
                        LeafPoint::Prong { index: j, at: b } if j == i => self.prongs[*i].position(b) > pa,
                        _ => false,
                    }
                } else {
                    match y {
                        LeafPoint::Singularity => true,
                        LeafPoint::Prong { index: j, at: b } => {
                            (j == i && self.prongs[*i].position(b) < pa) || *j == (i + 1) % n || *j == (i + n - 1) % n
                        }
                    }
                }
            }
        }
    }
}

/// Per-orbit seed of the collapse: the fundamental domain on the base prong
/// runs from `t1` to `xd`, the image of `t1` under `g^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSeed {
    pub base: usize,
    pub t1: Qn,
    pub xd: Qn,
    /// `g^d` pushes points away from the singularity.
    pub outward: bool,
}

/// An equivariant monotone collapse `h` on a singular leaf.
#[derive(Clone, Debug, Serialize)]
pub struct MonotoneCollapse {
    pub leaf: SingularLeaf,
    pub generator: CircleHomeo,
    /// The generator was replaced by its inverse to expand positive prongs.
    pub flipped: bool,
    /// `g` moves the `i`-th positive prong to the `(i + rotation)`-th.
    pub rotation: usize,
    /// Least power of `g` fixing every prong.
    pub period: usize,
    pub permutation: Vec<usize>,
    pub seeds: Vec<OrbitSeed>,
    /// Orbit index and offset of each prong relative to its orbit base.
    pub placement: Vec<(usize, usize)>,
    #[serde(skip)]
    inverse: CircleHomeo,
}

const MAX_PULLBACK: usize = 4096;

/// `2^⌊w⌋ (1 + frac w)`: increasing, `2^k` at integers, tending to 0 at −∞.
fn dyadic_profile(w: &Qn) -> Result<Qn> {
    let f = w
        .floor()
        .to_i64()
        .filter(|f| f.abs() <= 62)
        .ok_or_else(|| ForgeError::Degenerate(format!("collapse coordinate {w} is out of range")))?;
    let frac = w - &Qn::from_int(f);
    let scale = if f >= 0 { Qn::from_int(1 << f) } else { Qn::from_ratio(1, 1 << -f) };
    Ok(&scale * &(&Qn::one() + &frac))
}

fn power(g: &CircleHomeo, inv: &CircleHomeo, k: i64, p: &CirclePoint) -> CirclePoint {
    let m = if k >= 0 { g } else { inv };
    let mut q = p.clone();
    for _ in 0..k.unsigned_abs() {
        q = m.apply(&q);
    }
    q
}

/// Builds `h` on `leaf` for the stabilizer generator `g`.
pub fn build_h(leaf: &SingularLeaf, g: &CircleHomeo) -> Result<MonotoneCollapse> {
    let c = build_oriented(leaf, g, false)?;
    let positive_out: Vec<bool> = c.seeds.iter().filter(|s| leaf.prongs[s.base].positive).map(|s| s.outward).collect();
    if positive_out.iter().all(|&o| o) {
        return Ok(c);
    }
    if positive_out.iter().any(|&o| o) {
        return Err(ForgeError::Contradiction(
            "the generator expands some positive prongs and contracts others".into(),
        ));
    }
    build_oriented(leaf, &g.inverse(), true)
}

fn build_oriented(leaf: &SingularLeaf, g: &CircleHomeo, flipped: bool) -> Result<MonotoneCollapse> {
    let perm = leaf.permutation(g)?;
    let n = leaf.half_leaves();
    let mut period = 1;
    let mut cur = perm.clone();
    while cur.iter().enumerate().any(|(i, &j)| i != j) {
        cur = cur.iter().map(|&j| perm[j]).collect();
        period += 1;
    }
    let rotation = perm[0] / 2;
    let inverse = g.inverse();
    let mut placement = vec![(usize::MAX, 0); n];
    let mut seeds = Vec::new();
    for base in 0..n {
        if placement[base].0 != usize::MAX {
            continue;
        }
        let mut j = base;
        for off in 0..period {
            placement[j] = (seeds.len(), off);
            j = perm[j];
        }
        let prong = &leaf.prongs[base];
        let t1 = &prong.span() * &Qn::from_ratio(1, 2);
        let image = power(g, &inverse, period as i64, &prong.point_at(&t1));
        let xd = prong.position(&image).ok_or_else(|| {
            ForgeError::Contradiction(format!("g^{period} moves the midpoint of prong {base} off the prong"))
        })?;
        if xd == t1 {
            return Err(ForgeError::Contradiction(format!(
                "expansion check failed: g^{period} fixes the midpoint of prong {base}"
            )));
        }
        let outward = xd > t1;
        seeds.push(OrbitSeed { base, t1, xd, outward });
    }
    let neg: BTreeSet<bool> = seeds.iter().filter(|s| !leaf.prongs[s.base].positive).map(|s| s.outward).collect();
    if neg.len() > 1 {
        return Err(ForgeError::Inconsistent("negative prongs move in both directions under the generator".into()));
    }
    Ok(MonotoneCollapse {
        leaf: leaf.clone(),
        generator: g.clone(),
        flipped,
        rotation,
        period,
        permutation: perm,
        seeds,
        placement,
        inverse,
    })
}

impl MonotoneCollapse {
    pub fn generator(&self) -> &CircleHomeo {
        &self.generator
    }

    /// Applies `g^k` to a point of the leaf.
    pub fn step(&self, k: i64, x: &LeafPoint) -> LeafPoint {
        let mut y = x.clone();
        for _ in 0..k.unsigned_abs() {
            y = match &y {
                LeafPoint::Singularity => LeafPoint::Singularity,
                LeafPoint::Prong { index, at } => {
                    if k > 0 {
                        LeafPoint::Prong { index: self.permutation[*index], at: self.generator.apply(at) }
                    } else {
                        let back = self.permutation.iter().position(|&p| p == *index).expect("permutation");
                        LeafPoint::Prong { index: back, at: self.inverse.apply(at) }
                    }
                }
            };
        }
        y
    }

    /// The orbit coordinate `z`, with `z(g x) = z(x) + 1`.
    pub fn coordinate(&self, x: &LeafPoint) -> Result<Qn> {
        let LeafPoint::Prong { index, at } = x else {
            return Err(ForgeError::Precondition("the singularity has no orbit coordinate".into()));
        };
        let (orbit, off) = self.placement[*index];
        let seed = &self.seeds[orbit];
        let base = &self.leaf.prongs[seed.base];
        let d = self.period as i64;
        let mut y = power(&self.generator, &self.inverse, -(off as i64), at);
        let span = &seed.xd - &seed.t1;
        let dq = Qn::from_int(d);
        let mut k = 0i64;
        for _ in 0..MAX_PULLBACK {
            let pos = base.position(&y).ok_or_else(|| {
                ForgeError::Contradiction(format!("{at} does not lie on prong {index} of the singular leaf"))
            })?;
            let u = &dq * &(&(&pos - &seed.t1) / &span);
            if u >= dq {
                y = power(&self.generator, &self.inverse, -d, &y);
                k += 1;
            } else if u.sign() < 0 {
                y = power(&self.generator, &self.inverse, d, &y);
                k -= 1;
            } else {
                return Ok(&Qn::from_int(k * d + off as i64) + &u);
            }
        }
        Err(ForgeError::Degenerate(format!("no fundamental domain reached from {at}")))
    }

    /// The coordinate increasing away from the singularity.
    fn outward_coordinate(&self, index: usize, z: Qn) -> Qn {
        if self.seeds[self.placement[index].0].outward {
            z
        } else {
            -z
        }
    }

    pub fn h(&self, x: &LeafPoint) -> Result<Qn> {
        match x {
            LeafPoint::Singularity => Ok(Qn::zero()),
            LeafPoint::Prong { index, .. } => {
                let w = self.outward_coordinate(*index, self.coordinate(x)?);
                let v = dyadic_profile(&w)?;
                Ok(if self.leaf.prongs[*index].positive { v } else { -v })
            }
        }
    }

    /// The point of prong `index` with outward coordinate `w`.
    pub fn point_at(&self, index: usize, w: &Qn) -> LeafPoint {
        let z = self.outward_coordinate(index, w.clone());
        let (orbit, off) = self.placement[index];
        let seed = &self.seeds[orbit];
        let d = self.period as i64;
        let zb = &z - &Qn::from_int(off as i64);
        let k = (&zb / &Qn::from_int(d)).floor().to_i64().expect("bounded coordinate");
        let u = &zb - &Qn::from_int(k * d);
        let pos = &seed.t1 + &(&(&u / &Qn::from_int(d)) * &(&seed.xd - &seed.t1));
        let start = self.leaf.prongs[seed.base].point_at(&pos);
        let at = power(&self.generator, &self.inverse, k * d + off as i64, &start);
        LeafPoint::Prong { index, at }
    }

    /// Grid samples on every prong at outward coordinates `−count/16 + i/8`.
    pub fn samples(&self, per_half_leaf: usize) -> Vec<(LeafPoint, Qn)> {
        let start = Qn::from_ratio(-(per_half_leaf as i64), 16);
        let mut out = Vec::new();
        for index in 0..self.leaf.half_leaves() {
            for i in 0..per_half_leaf {
                let w = &start + &Qn::from_ratio(i as i64, 8);
                out.push((self.point_at(index, &w), w));
            }
        }
        out
    }
}

/// The relation collapsed on a leaf: trivial on regular leaves.
#[derive(Clone, Debug)]
pub enum Collapse {
    Identity,
    Monotone(Box<MonotoneCollapse>),
}

impl Collapse {
    pub fn related(&self, x: &LeafPoint, y: &LeafPoint) -> Result<bool> {
        match self {
            Collapse::Identity => Ok(x == y),
            Collapse::Monotone(c) => Ok(c.h(x)? == c.h(y)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseCheck {
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub samples: usize,
    pub checks: Vec<CollapseCheck>,
}

impl CollapseReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CollapseCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn outcome(name: &str, witness: Option<Value>) -> CollapseCheck {
    CollapseCheck { name: name.into(), pass: witness.is_none(), witness }
}

/// A rotation small enough to keep every vertex of the star below angle 1.
fn conjugating_rotation(leaf: &SingularLeaf) -> Qn {
    let top = leaf.prongs.iter().flat_map(|p| [p.inner.angle(), p.outer.angle()]).max().expect("prongs").clone();
    let room = &(&Qn::one() - &top) * &Qn::from_ratio(1, 2);
    let quarter = Qn::from_ratio(1, 4 * leaf.half_leaves() as i64);
    room.min(quarter)
}

/// Checks the collapse on grid samples: signs, monotonicity, the orbit
/// relation, local injectivity against orbits and equivariance under
/// conjugation.
pub fn check_collapse(c: &MonotoneCollapse, per_half_leaf: usize) -> Result<CollapseReport> {
    let samples = c.samples(per_half_leaf);
    let mut hs = Vec::with_capacity(samples.len());
    for (x, _) in &samples {
        hs.push(c.h(x)?);
    }
    let mut checks = Vec::new();

    let mut bad = None;
    if !c.h(&LeafPoint::Singularity)?.is_zero() {
        bad = Some(json!({ "point": "singularity" }));
    }
    for ((x, _), h) in samples.iter().zip(&hs) {
        if bad.is_none() && (h.sign() > 0) != c.leaf.is_positive(x).unwrap_or(false) {
            bad = Some(json!({ "point": x, "h": h }));
        }
    }
    checks.push(outcome("signs", bad));

    let mut bad = None;
    for index in 0..c.leaf.half_leaves() {
        let mut row: Vec<(Qn, Qn, &Qn)> = samples
            .iter()
            .zip(&hs)
            .filter(|((x, _), _)| matches!(x, LeafPoint::Prong { index: i, .. } if *i == index))
            .map(|((x, w), h)| (c.leaf.position(x).expect("on prong"), w.clone(), h))
            .collect();
        row.sort_by(|a, b| a.0.cmp(&b.0));
        let positive = c.leaf.prongs[index].positive;
        for (pos, w, h) in &row {
            let expect = dyadic_profile(w)?;
            let expect = if positive { expect } else { -expect };
            if bad.is_none() && &expect != *h {
                bad = Some(json!({ "prong": index, "position": pos, "h": h, "grid": expect }));
            }
        }
        for pair in row.windows(2) {
            let rising = pair[1].2 > pair[0].2;
            if bad.is_none() && (rising != positive || pair[1].2 == pair[0].2) {
                bad =
                    Some(json!({ "prong": index, "positions": [&pair[0].0, &pair[1].0], "h": [pair[0].2, pair[1].2] }));
            }
        }
    }
    checks.push(outcome("monotone", bad));

    let mut groups: BTreeMap<&Qn, Vec<usize>> = BTreeMap::new();
    for (i, h) in hs.iter().enumerate() {
        groups.entry(h).or_default().push(i);
    }
    let mut bad = None;
    'rel: for (k, name) in [(1i64, "g"), (-1, "g^-1")] {
        for members in groups.values().filter(|m| m.len() > 1) {
            let first = c.h(&c.step(k, &samples[members[0]].0))?;
            for &i in &members[1..] {
                let hi = c.h(&c.step(k, &samples[i].0))?;
                if hi != first {
                    bad = Some(json!({
                        "map": name, "x": samples[members[0]].0, "y": samples[i].0, "h_gx": first, "h_gy": hi
                    }));
                    break 'rel;
                }
            }
        }
    }
    checks.push(outcome("orbit_relation", bad));

    let mut bad = None;
    let d = c.period as i64;
    let per = per_half_leaf;
    'further: for (i, (x, _)) in samples.iter().enumerate() {
        let j = i % per;
        let lo = if j > 0 { &hs[i - 1] } else { &hs[i] };
        let hi = if j + 1 < per { &hs[i + 1] } else { &hs[i] };
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        for k in (-2 * d..=2 * d).filter(|&k| k != 0) {
            let hk = c.h(&c.step(k, x))?;
            if &hk > lo && &hk < hi && hk != hs[i] {
                bad = Some(json!({ "x": x, "power": k, "h_orbit": hk, "neighbourhood": [lo, hi] }));
                break 'further;
            }
        }
    }
    checks.push(outcome("further", bad));

    let angle = conjugating_rotation(&c.leaf);
    let f = CircleHomeo::rotation(&angle);
    let moved = |pts: Vec<&CirclePoint>| -> Vec<CirclePoint> { pts.into_iter().map(|p| f.apply(p)).collect() };
    let own = moved(c.leaf.prongs.iter().map(|p| &p.outer).collect());
    let other = moved(c.leaf.prongs.iter().map(|p| &p.inner).collect());
    let leaf2 = SingularLeaf::from_polygons(&own, &other)?;
    let base_gen = if c.flipped { c.inverse.clone() } else { c.generator.clone() };
    let g2 = f.compose(&base_gen).compose(&f.inverse());
    let c2 = build_h(&leaf2, &g2)?;
    let mut bad = None;
    for ((x, _), h) in samples.iter().zip(&hs) {
        let LeafPoint::Prong { index, at } = x else { continue };
        let y = LeafPoint::Prong { index: *index, at: f.apply(at) };
        let h2 = c2.h(&y)?;
        if &h2 != h {
            bad = Some(json!({ "x": x, "h": h, "h_conjugate": h2, "rotation": angle }));
            break;
        }
    }
    checks.push(outcome("equivariant", bad));

    Ok(CollapseReport { samples: samples.len(), checks })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RayCase {
    I,
    II,
    III,
    IV,
}

/// Samples of `R_x` with their coordinate in the collapsed ray `r_x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray<P> {
    pub case: RayCase,
    pub carrier: Vec<(P, Qn)>,
    /// Distinct coordinates in increasing order.
    pub collapsed: Vec<Qn>,
}

impl<P> Ray<P> {
    fn from_carrier(case: RayCase, mut carrier: Vec<(P, Qn)>) -> Self {
        carrier.sort_by(|a, b| a.1.cmp(&b.1));
        let mut collapsed: Vec<Qn> = carrier.iter().map(|(_, t)| t.clone()).collect();
        collapsed.dedup();
        Ray { case, carrier, collapsed }
    }
}

/// Position of `y` in the collapsed ray of `x` on a singular leaf.
pub fn ray_coordinate(c: &MonotoneCollapse, x: &LeafPoint, y: &LeafPoint) -> Result<Qn> {
    Ok(&c.h(y)? - &c.h(x)?)
}

/// The ray of a point of a singular leaf, over the given samples.
pub fn star_ray(c: &MonotoneCollapse, x: &LeafPoint, points: &[LeafPoint]) -> Result<Ray<LeafPoint>> {
    let case = match c.leaf.is_positive(x) {
        None => RayCase::IV,
        Some(true) => RayCase::II,
        Some(false) => RayCase::III,
    };
    let mut carrier = Vec::new();
    for y in points.iter().filter(|y| c.leaf.in_ray(x, y)) {
        carrier.push((y.clone(), ray_coordinate(c, x, y)?));
    }
    Ok(Ray::from_carrier(case, carrier))
}

/// Whether the orientation runs from `lo` to `hi` along `l`.
pub(crate) fn ascending(orientation: Option<&Orientation>, l: &Leaf) -> bool {
    orientation.is_none_or(|o| &o.oriented(l).1 == l.hi())
}

pub(crate) fn signed_key(orientation: Option<&Orientation>, base: &Leaf, l: &Leaf) -> Option<Qn> {
    let k = crossing_key(base, l)?.at;
    Some(if ascending(orientation, base) { k } else { -k })
}

/// The ray of the point `leaf ∩ from` on a regular leaf.
pub fn thread_ray(
    leaf: &Leaf,
    from: &Leaf,
    candidates: &[Leaf],
    orientation: Option<&Orientation>,
) -> Result<Ray<Leaf>> {
    let k0 = signed_key(orientation, leaf, from)
        .ok_or_else(|| ForgeError::Precondition("the base point leaf does not cross the leaf".into()))?;
    let carrier = candidates
        .iter()
        .filter_map(|m| signed_key(orientation, leaf, m).map(|k| (m.clone(), &k - &k0)))
        .filter(|(_, t)| t.sign() > 0)
        .collect();
    Ok(Ray::from_carrier(RayCase::I, carrier))
}

/// A representative `(x, y)` of a point of N, with `y` on the ray of `x`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NPoint {
    /// `x = leaf ∩ base`, `y = leaf ∩ target` on a regular leaf.
    Regular {
        leaf: Leaf,
        base: Leaf,
        target: Leaf,
    },
    Star {
        base: LeafPoint,
        target: LeafPoint,
    },
}

/// Equality in N: same base point, and targets equal after collapsing.
pub fn n_equiv(collapse: &Collapse, a: &NPoint, b: &NPoint) -> Result<bool> {
    match (a, b) {
        (NPoint::Regular { leaf: l1, base: b1, target: t1 }, NPoint::Regular { leaf: l2, base: b2, target: t2 }) => {
            Ok(l1.same_chord(l2) && b1.same_chord(b2) && t1.same_chord(t2))
        }
        (NPoint::Star { base: x1, target: y1 }, NPoint::Star { base: x2, target: y2 }) => {
            Ok(x1 == x2 && collapse.related(y1, y2)?)
        }
        _ => Ok(false),
    }
}

/// The action of `g` on N. On a singular leaf `g` must stabilize the leaf;
/// the image is checked against every sample representing the same point.
pub fn act_on_n(
    g: &CircleHomeo,
    p: &NPoint,
    collapse: Option<&MonotoneCollapse>,
    classmates: &[LeafPoint],
) -> Result<NPoint> {
    match p {
        NPoint::Regular { leaf, base, target } => {
            Ok(NPoint::Regular { leaf: g.apply_leaf(leaf), base: g.apply_leaf(base), target: g.apply_leaf(target) })
        }
        NPoint::Star { base, target } => {
            let c = collapse.ok_or_else(|| ForgeError::Precondition("a singular leaf needs its collapse".into()))?;
            let perm = c.leaf.permutation(g)?;
            let gx = c.leaf.apply(g, &perm, base);
            let gy = c.leaf.apply(g, &perm, target);
            let t = ray_coordinate(c, &gx, &gy)?;
            let h = c.h(target)?;
            for y in classmates.iter().filter(|y| c.leaf.in_ray(base, y)) {
                if c.h(y)? == h {
                    let other = ray_coordinate(c, &gx, &c.leaf.apply(g, &perm, y))?;
                    if other != t {
                        return Err(ForgeError::Inconsistent(format!(
                            "equivariance violated: representatives {target:?} and {y:?} have images at {t} and {other}"
                        )));
                    }
                }
            }
            Ok(NPoint::Star { base: gx, target: gy })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Freeness {
    NoFixedFound { samples: usize, elements: usize },
    Witness { word: String, point: NPoint, displacement: Qn },
}

impl Freeness {
    pub fn is_witness(&self) -> bool {
        matches!(self, Freeness::Witness { .. })
    }
}

/// Consecutive crossings along each positive sample leaf as points of N.
pub fn sample_n_points(plus: &[Leaf], minus: &[Leaf], orientation: Option<&Orientation>) -> Vec<NPoint> {
    let mut out = Vec::new();
    for l in plus {
        let mut thread: Vec<(Qn, &Leaf)> =
            minus.iter().filter_map(|m| signed_key(orientation, l, m).map(|k| (k, m))).collect();
        thread.sort_by(|a, b| a.0.cmp(&b.0));
        for w in thread.windows(2) {
            out.push(NPoint::Regular { leaf: l.clone(), base: w[0].1.clone(), target: w[1].1.clone() });
        }
    }
    out
}

/// Displacement of a point of N: leaf-space distances of the two leaves
/// through `x`, plus the log-scale proxy `max(ρ, 1/ρ) − 1` for the ratio `ρ`
/// of ray lengths from `x` to `y` before and after moving.
fn n_displacement(
    coords: &mut impl FnMut(&Leaf, bool) -> Option<(Qn, Qn)>,
    leaf: &Leaf,
    base: &Leaf,
    target: &Leaf,
) -> Option<Qn> {
    let (l0, l1) = coords(leaf, true)?;
    let (b0, b1) = coords(base, false)?;
    let (t0, t1) = coords(target, false)?;
    let before = (&t0 - &b0).abs();
    let after = (&t1 - &b1).abs();
    if before.is_zero() || after.is_zero() {
        return None;
    }
    let ratio = &after / &before;
    let stretch = if ratio >= Qn::one() { ratio } else { ratio.recip() };
    Some(&(&(&l1 - &l0).abs() + &(&b1 - &b0).abs()) + &(&stretch - &Qn::one()))
}

/// Looks for a nontrivial ball element moving a sampled point of N less
/// than `eps`.
pub fn freeness_sample(
    action: &GroupAction,
    radius: u32,
    points: &[NPoint],
    plus_metric: &LeafSpaceMetric,
    minus_metric: &LeafSpaceMetric,
    eps: &Qn,
) -> Freeness {
    let ball = action.ball(radius);
    let mut elements = 0;
    for el in ball.nontrivial() {
        elements += 1;
        let mut cache: BTreeMap<(Leaf, bool), Option<(Qn, Qn)>> = BTreeMap::new();
        let mut coords = |l: &Leaf, plus: bool| -> Option<(Qn, Qn)> {
            let m = if plus { plus_metric } else { minus_metric };
            cache
                .entry((l.clone(), plus))
                .or_insert_with(|| Some((m.coordinate(l)?, m.coordinate(&el.map.apply_leaf(l))?)))
                .clone()
        };
        for p in points {
            let NPoint::Regular { leaf, base, target } = p else { continue };
            if let Some(d) = n_displacement(&mut coords, leaf, base, target) {
                if &d < eps {
                    return Freeness::Witness { word: ball.render(&el.word), point: p.clone(), displacement: d };
                }
            }
        }
    }
    Freeness::NoFixedFound { samples: points.len(), elements }
}

/// Glues plaques (node sets) into transverse-leaf ids. Ids are the least
/// node of each glued class, so they do not depend on the chart order
/// produced by `seed`.
pub fn glue_plaques(nodes: usize, plaques: &[Vec<usize>], seed: u64) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..plaques.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut uf = UnionFind::new(nodes);
    let mut covered = vec![false; nodes];
    for i in order {
        let p = &plaques[i];
        for &v in p {
            covered[v] = true;
        }
        for w in p.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    (0..nodes).map(|v| covered[v].then(|| uf.find(v))).collect()
}

/// Sampled neighbourhood of a singular leaf: the singularity (node 0),
/// grid samples along each prong, and overlapping charts.
#[derive(Clone, Debug, Serialize)]
pub struct StarComplex {
    pub points: Vec<LeafPoint>,
    pub edges: Vec<(usize, usize)>,
    pub charts: Vec<Vec<usize>>,
}

impl StarComplex {
    /// Charts are windows of `window` samples along each prong overlapping
    /// in one sample, plus one chart around the singularity.
    pub fn new(c: &MonotoneCollapse, per_half_leaf: usize, window: usize) -> Result<Self> {
        if window < 2 {
            return Err(ForgeError::Precondition("charts need at least two samples".into()));
        }
        let mut points = vec![LeafPoint::Singularity];
        let mut edges = Vec::new();
        let mut charts = Vec::new();
        let mut star = vec![0];
        let samples = c.samples(per_half_leaf);
        for index in 0..c.leaf.half_leaves() {
            let mut row: Vec<(Qn, LeafPoint)> = samples
                .iter()
                .filter(|(x, _)| matches!(x, LeafPoint::Prong { index: i, .. } if *i == index))
                .map(|(x, _)| (c.leaf.position(x).expect("on prong"), x.clone()))
                .collect();
            row.sort_by(|a, b| a.0.cmp(&b.0));
            let ids: Vec<usize> = (points.len()..points.len() + row.len()).collect();
            points.extend(row.into_iter().map(|(_, x)| x));
            edges.push((0, ids[0]));
            edges.extend(ids.windows(2).map(|w| (w[0], w[1])));
            star.extend(ids.iter().take(2));
            let mut start = 0;
            while start + 1 < ids.len() {
                charts.push(ids[start..(start + window).min(ids.len())].to_vec());
                start += window - 1;
            }
        }
        charts.push(star);
        Ok(StarComplex { points, edges, charts })
    }

    /// Plaques at target `y`: components of each chart's part of `E_y`.
    pub fn plaques(&self, leaf: &SingularLeaf, y: usize) -> Vec<Vec<usize>> {
        let in_e: Vec<bool> = self.points.iter().map(|x| leaf.in_ray(x, &self.points[y])).collect();
        let mut out = Vec::new();
        for chart in &self.charts {
            let members: BTreeSet<usize> = chart.iter().copied().filter(|&v| in_e[v]).collect();
            let mut seen = BTreeSet::new();
            for &v in &members {
                if !seen.insert(v) {
                    continue;
                }
                let mut comp = vec![v];
                let mut stack = vec![v];
                while let Some(u) = stack.pop() {
                    for &(a, b) in &self.edges {
                        let w = if a == u {
                            b
                        } else if b == u {
                            a
                        } else {
                            continue;
                        };
                        if members.contains(&w) && seen.insert(w) {
                            comp.push(w);
                            stack.push(w);
                        }
                    }
                }
                comp.sort();
                out.push(comp);
            }
        }
        out
    }

    /// Transverse-leaf id of each node of `E_y`.
    pub fn transverse_leaves(&self, leaf: &SingularLeaf, y: usize, seed: u64) -> BTreeMap<usize, usize> {
        glue_plaques(self.points.len(), &self.plaques(leaf, y), seed)
            .into_iter()
            .enumerate()
            .filter_map(|(v, id)| id.map(|id| (v, id)))
            .collect()
    }

    /// Distinct transverse leaves through the pairs `(x, y)` with `x ∈ E_y`.
    pub fn asymptotic_count(&self, leaf: &SingularLeaf, y: usize, seed: u64) -> usize {
        self.transverse_leaves(leaf, y, seed).values().collect::<BTreeSet<_>>().len()
    }
}

/// A box of the regular chart complex: a window of positive leaves, a
/// window of base crossings and a window of target crossings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularChart {
    pub leaves: (usize, usize),
    pub bases: (usize, usize),
    pub targets: (usize, usize),
}

/// Transverse-leaf ids over the regular part of the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularLeafIds {
    pub targets: Vec<Leaf>,
    /// Distinct glued ids among the pairs ending on each target leaf.
    pub ids_per_target: Vec<usize>,
    pub charts: Vec<RegularChart>,
    pub nodes: usize,
}

fn windows(n: usize, w: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut s = 0;
    loop {
        out.push((s, (s + w).min(n)));
        if s + w >= n {
            break;
        }
        s += w - 1;
    }
    out
}

/// Glues plaques over pairs `(x, y)` on the sample positive leaves, with `x`
/// and `y` crossings by sample negative leaves and `y` beyond `x`.
pub fn regular_leaf_ids(
    plus: &[Leaf],
    minus: &[Leaf],
    orientation: Option<&Orientation>,
    window: usize,
    seed: u64,
) -> RegularLeafIds {
    let window = window.max(2);
    let mut nodes: Vec<(usize, usize, usize)> = Vec::new();
    for (i, l) in plus.iter().enumerate() {
        let keys: Vec<Option<Qn>> = minus.iter().map(|m| signed_key(orientation, l, m)).collect();
        for (a, ka) in keys.iter().enumerate() {
            for (b, kb) in keys.iter().enumerate() {
                if let (Some(ka), Some(kb)) = (ka, kb) {
                    if kb > ka {
                        nodes.push((i, a, b));
                    }
                }
            }
        }
    }
    let lw = windows(plus.len(), window);
    let mw = windows(minus.len(), window);
    let mut charts = Vec::new();
    let mut plaques = Vec::new();
    for &leaves in &lw {
        for &bases in &mw {
            for &targets in &mw {
                let mut by_target: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for (v, &(i, a, b)) in nodes.iter().enumerate() {
                    if (leaves.0..leaves.1).contains(&i)
                        && (bases.0..bases.1).contains(&a)
                        && (targets.0..targets.1).contains(&b)
                    {
                        by_target.entry(b).or_default().push(v);
                    }
                }
                if !by_target.is_empty() {
                    charts.push(RegularChart { leaves, bases, targets });
                    plaques.extend(by_target.into_values());
                }
            }
        }
    }
    let ids = glue_plaques(nodes.len(), &plaques, seed);
    let mut per: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); minus.len()];
    for (v, id) in ids.iter().enumerate() {
        if let Some(id) = id {
            per[nodes[v].2].insert(*id);
        }
    }
    RegularLeafIds {
        targets: minus.to_vec(),
        ids_per_target: per.iter().map(BTreeSet::len).collect(),
        charts,
        nodes: nodes.len(),
    }
}

/// Flow-space data for one singular point of the plane.
#[derive(Clone, Debug, Serialize)]
pub struct SingularFlowData {
    pub prongs: usize,
    pub word: String,
    pub collapse: MonotoneCollapse,
    pub checks: CollapseReport,
    /// Transverse leaves asymptotic to the singular leaf.
    pub asymptotic: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowReport {
    pub depth: u32,
    pub seed: u64,
    pub singular: Vec<SingularFlowData>,
    /// Singular points whose stabilizer has no generator in the ball.
    pub unstabilized: usize,
    pub regular: RegularLeafIds,
    pub freeness: Freeness,
}

#[derive(Clone, Debug)]
pub struct FlowParams {
    pub depth: u32,
    pub seed: u64,
    pub radius: u32,
    pub eps: Qn,
    pub samples_per_half_leaf: usize,
    pub window: usize,
}

impl FlowParams {
    pub fn new(depth: u32, seed: u64) -> Self {
        FlowParams { depth, seed, radius: 3, eps: Qn::from_ratio(1, 32), samples_per_half_leaf: 64, window: 4 }
    }
}

/// Core leaves of the enumeration, used both as metric references and as
/// sample leaves for N.
pub fn n_samples(src: &AlmostLamination, depth: u32) -> Vec<Leaf> {
    src.enumerate(core_depth(depth)).to_vec()
}

/// Metric for one family referenced to its sample leaves.
pub fn family_metric(src: &AlmostLamination, others: &[Leaf], depth: u32) -> Option<LeafSpaceMetric> {
    LeafSpaceMetric::new(&n_samples(src, depth), others)
}

/// Drops the two extreme leaves, whose neighbourhoods the metric squeezes.
pub fn interior(leaves: &[Leaf], metric: &LeafSpaceMetric) -> Vec<Leaf> {
    let mut keyed: Vec<(Qn, &Leaf)> = leaves.iter().filter_map(|l| metric.coordinate(l).map(|c| (c, l))).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let n = keyed.len();
    if n <= 2 {
        return Vec::new();
    }
    keyed[1..n - 1].iter().map(|(_, l)| (*l).clone()).collect()
}

/// Builds collapses at singular points, the chart complexes and their leaf
/// ids, and samples freeness of the action on N.
pub fn build_flow(
    plane: &PlaneApprox,
    plus: &AlmostLamination,
    minus: &AlmostLamination,
    action: &GroupAction,
    params: &FlowParams,
) -> Result<FlowReport> {
    let ball = action.ball(params.radius);
    let mut singular = Vec::new();
    let mut unstabilized = 0;
    for p in plane.singular_points() {
        let ends = |cls: &[Leaf]| -> Vec<CirclePoint> {
            let s: BTreeSet<CirclePoint> = cls.iter().flat_map(|l| l.endpoints().into_iter().cloned()).collect();
            s.into_iter().collect()
        };
        let own = ends(&plane.plus.classes[p.plus].leaves);
        let other = ends(&plane.minus.classes[p.minus].leaves);
        let leaf = SingularLeaf::from_polygons(&own, &other)?;
        let Some(el) = ball.nontrivial().find(|e| leaf.permutation(&e.map).is_ok()) else {
            unstabilized += 1;
            continue;
        };
        let collapse = build_h(&leaf, &el.map)?;
        let checks = check_collapse(&collapse, params.samples_per_half_leaf)?;
        let complex = StarComplex::new(&collapse, params.samples_per_half_leaf, params.window)?;
        let asymptotic = complex.asymptotic_count(&leaf, 0, params.seed);
        singular.push(SingularFlowData {
            prongs: leaf.half_leaves(),
            word: ball.render(&el.word),
            collapse,
            checks,
            asymptotic,
        });
    }
    let ps = n_samples(plus, params.depth);
    let ms = n_samples(minus, params.depth);
    let orientation = plus.orient(params.depth).ok();
    let regular = regular_leaf_ids(&ps, &ms, orientation.as_ref(), params.window, params.seed);
    let freeness = match (
        family_metric(plus, &minus.enumerate(params.depth), params.depth),
        family_metric(minus, &plus.enumerate(params.depth), params.depth),
    ) {
        (Some(mp), Some(mm)) => {
            let points = sample_n_points(&interior(&ps, &mp), &interior(&ms, &mm), orientation.as_ref());
            freeness_sample(action, params.radius, &points, &mp, &mm, &params.eps)
        }
        _ => Freeness::NoFixedFound { samples: 0, elements: 0 },
    };
    Ok(FlowReport { depth: params.depth, seed: params.seed, singular, unstabilized, regular, freeness })
}
