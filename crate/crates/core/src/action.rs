//! Piecewise fractional-linear circle homeomorphisms and finite word balls.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::circle::{in_open_arc, to_integer, CirclePoint, QuadraticNumber};
use crate::error::{ForgeError, Result};
use crate::lamination::{orient, AlmostLamination, Leaf, Linkage};

/// Hard cap on ball radius.
pub const MAX_RADIUS: u32 = 8;
/// Number of probe points `k/64` used to compare maps.
pub const PROBE_COUNT: i64 = 64;

type Qn = QuadraticNumber;

/// A fractional-linear map `x ↦ (p x + q) / (r x + s)`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mobius {
    pub p: Qn,
    pub q: Qn,
    pub r: Qn,
    pub s: Qn,
}

impl Mobius {
    pub fn new(p: Qn, q: Qn, r: Qn, s: Qn) -> Self {
        Mobius { p, q, r, s }.normalized()
    }

    pub fn from_ints(p: i64, q: i64, r: i64, s: i64) -> Self {
        Self::new(Qn::from_int(p), Qn::from_int(q), Qn::from_int(r), Qn::from_int(s))
    }

    pub fn identity() -> Self {
        Self::from_ints(1, 0, 0, 1)
    }

    /// Translation `x ↦ x + k`.
    pub fn shift(k: &BigInt) -> Self {
        let k = Qn::rational(BigRational::from_integer(k.clone()));
        Self::new(Qn::one(), k, Qn::zero(), Qn::one())
    }

    /// Affine map `x ↦ a x + b`.
    pub fn affine(a: Qn, b: Qn) -> Self {
        Self::new(a, b, Qn::zero(), Qn::one())
    }

    fn normalized(self) -> Self {
        let c = if !self.r.is_zero() { self.r.clone() } else { self.s.clone() };
        assert!(!c.is_zero(), "singular fractional-linear map");
        if c == Qn::one() {
            return self;
        }
        Mobius { p: &self.p / &c, q: &self.q / &c, r: &self.r / &c, s: &self.s / &c }
    }

    pub fn det(&self) -> Qn {
        &(&self.p * &self.s) - &(&self.q * &self.r)
    }

    pub fn denominator_at(&self, x: &Qn) -> Qn {
        &(&self.r * x) + &self.s
    }

    pub fn eval(&self, x: &Qn) -> Qn {
        let num = &(&self.p * x) + &self.q;
        if self.r.is_zero() {
            return &num / &self.s;
        }
        &num / &self.denominator_at(x)
    }

    /// `self ∘ other`.
    pub fn compose(&self, o: &Mobius) -> Mobius {
        Mobius::new(
            &(&self.p * &o.p) + &(&self.q * &o.r),
            &(&self.p * &o.q) + &(&self.q * &o.s),
            &(&self.r * &o.p) + &(&self.s * &o.r),
            &(&self.r * &o.q) + &(&self.s * &o.s),
        )
    }

    /// Adjugate, which is the inverse up to scale.
    pub fn inverse(&self) -> Mobius {
        Mobius::new(self.s.clone(), -&self.q, -&self.r, self.p.clone())
    }

    fn entries(&self) -> [&Qn; 4] {
        [&self.p, &self.q, &self.r, &self.s]
    }
}

impl fmt::Debug for Mobius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.p, self.q, self.r, self.s)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
struct Piece {
    start: Qn,
    map: Mobius,
}

/// An orientation-preserving circle homeomorphism given by fractional-linear
/// pieces acting on a continuous lift `F` with `F(t + 1) = F(t) + 1`.
///
/// Stored canonically: the first piece starts at 0, `F(0) ∈ [0, 1)`, and
/// adjacent pieces carry projectively distinct matrices.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CircleHomeo {
    pieces: Vec<Piece>,
}

/// A fixed point, exact when the field allows it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FixedPoint {
    Exact { at: CirclePoint },
    Bracket { lo: CirclePoint, hi: CirclePoint },
    Arc { from: CirclePoint, to: CirclePoint },
}

impl CircleHomeo {
    pub fn identity() -> Self {
        CircleHomeo { pieces: vec![Piece { start: Qn::zero(), map: Mobius::identity() }] }
    }

    /// Rotation by `angle` turns.
    pub fn rotation(angle: &Qn) -> Self {
        Self::from_pieces(vec![(CirclePoint::zero(), Mobius::affine(Qn::one(), angle.clone()))])
            .expect("rotations are valid")
    }

    /// Builds a map from `(breakpoint, matrix)` pairs. Each matrix acts on the
    /// lifted coordinate of its piece; integer offsets between pieces are
    /// reconciled, and a piece running through 0 is split there.
    pub fn from_pieces(mut raw: Vec<(CirclePoint, Mobius)>) -> Result<Self> {
        if raw.is_empty() {
            return Err(ForgeError::InvalidMap("no pieces".into()));
        }
        raw.sort_by(|a, b| a.0.cmp(&b.0));
        for w in raw.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ForgeError::InvalidMap(format!("repeated breakpoint {}", w[0].0)));
            }
        }
        let mut pieces: Vec<Piece> = Vec::with_capacity(raw.len() + 1);
        if raw[0].0 != CirclePoint::zero() {
            // the last piece wraps: on [0, b₀) its argument is t + 1
            let (_, m) = raw.last().unwrap();
            pieces.push(Piece { start: Qn::zero(), map: m.compose(&Mobius::shift(&BigInt::from(1))) });
        }
        pieces.extend(raw.into_iter().map(|(b, m)| Piece { start: b.angle().clone(), map: m }));
        let h = CircleHomeo { pieces };
        h.validate_pieces()?;
        h.reconcile()
    }

    fn end_of(&self, i: usize) -> Qn {
        self.pieces.get(i + 1).map(|p| p.start.clone()).unwrap_or_else(Qn::one)
    }

    fn validate_pieces(&self) -> Result<()> {
        for (i, pc) in self.pieces.iter().enumerate() {
            if pc.map.det().sign() <= 0 {
                return Err(ForgeError::InvalidMap(format!("piece at {} is not increasing", pc.start)));
            }
            let end = self.end_of(i);
            let d0 = pc.map.denominator_at(&pc.start).sign();
            let d1 = pc.map.denominator_at(&end).sign();
            if d0 == 0 || d0 != d1 {
                return Err(ForgeError::InvalidMap(format!("pole inside piece at {}", pc.start)));
            }
        }
        Ok(())
    }

    /// Makes the lift continuous, puts `F(0)` into `[0, 1)`, merges equal pieces.
    fn reconcile(mut self) -> Result<Self> {
        for i in 1..self.pieces.len() {
            let b = self.pieces[i].start.clone();
            let left = self.pieces[i - 1].map.eval(&b);
            let right = self.pieces[i].map.eval(&b);
            let k =
                to_integer(&(&left - &right)).ok_or_else(|| ForgeError::InvalidMap(format!("discontinuous at {b}")))?;
            if k != BigInt::from(0) {
                self.pieces[i].map = Mobius::shift(&k).compose(&self.pieces[i].map);
            }
        }
        let f0 = self.pieces[0].map.eval(&Qn::zero());
        let last = self.pieces.last().unwrap();
        let f1 = last.map.eval(&Qn::one());
        if &f1 - &f0 != Qn::one() {
            return Err(ForgeError::InvalidMap(format!("lift increases by {} over one turn", &f1 - &f0)));
        }
        let fl = f0.floor();
        if fl != BigInt::from(0) {
            let sh = Mobius::shift(&-fl);
            for pc in &mut self.pieces {
                pc.map = sh.compose(&pc.map);
            }
        }
        let mut merged: Vec<Piece> = Vec::with_capacity(self.pieces.len());
        for pc in self.pieces {
            match merged.last() {
                Some(prev) if prev.map == pc.map => {}
                _ => merged.push(pc),
            }
        }
        Ok(CircleHomeo { pieces: merged })
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn pieces(&self) -> Vec<(CirclePoint, Mobius)> {
        self.pieces.iter().map(|p| (CirclePoint::new(p.start.clone()), p.map.clone())).collect()
    }

    pub fn field(&self) -> u64 {
        self.pieces
            .iter()
            .flat_map(|p| p.map.entries().into_iter().map(|e| e.radicand()).chain([p.start.radicand()]))
            .find(|&d| d != 0)
            .unwrap_or(0)
    }

    fn piece_index(&self, t: &Qn) -> usize {
        match self.pieces.binary_search_by(|p| p.start.cmp(t)) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    /// Lifted value `F(t)` for `t ∈ [0, 1)`.
    pub fn lift(&self, t: &Qn) -> Qn {
        self.pieces[self.piece_index(t)].map.eval(t)
    }

    /// Lifted value for an arbitrary real argument.
    pub fn lift_any(&self, x: &Qn) -> Qn {
        let n = x.floor();
        let f = x.add_int(&-n.clone());
        self.lift(&f).add_int(&n)
    }

    pub fn apply(&self, p: &CirclePoint) -> CirclePoint {
        CirclePoint::new(self.lift(p.angle()))
    }

    /// Checked form of [`apply`](Self::apply).
    pub fn try_apply(&self, p: &CirclePoint) -> Result<CirclePoint> {
        let f = self.field();
        if f != 0 && p.field() != 0 && p.field() != f {
            return Err(ForgeError::FieldMismatch(f, p.field()));
        }
        Ok(self.apply(p))
    }

    pub fn apply_leaf(&self, l: &Leaf) -> Leaf {
        Leaf::new(self.apply(l.lo()), self.apply(l.hi()), l.sign()).expect("homeomorphisms keep endpoints distinct")
    }

    pub fn inverse(&self) -> CircleHomeo {
        let n = self.pieces.len();
        let images: Vec<Qn> = (0..=n)
            .map(|i| {
                if i < n {
                    self.lift(&self.pieces[i].start)
                } else {
                    self.lift(&Qn::zero()).add_int(&BigInt::from(1))
                }
            })
            .collect();
        let c0 = images[0].clone();
        let mut breaks: Vec<Qn> = images[..n].iter().map(|c| c.fract()).collect();
        breaks.push(Qn::zero());
        breaks.sort();
        breaks.dedup();
        let mut raw = Vec::with_capacity(breaks.len());
        for (k, b) in breaks.iter().enumerate() {
            let e = breaks.get(k + 1).cloned().unwrap_or_else(Qn::one);
            let mid = &(b + &e) / &Qn::from_int(2);
            let (arg, wrapped) = if mid >= c0 { (mid, false) } else { (mid.add_int(&BigInt::from(1)), true) };
            let i = (0..n).rev().find(|&i| images[i] <= arg).expect("lift covers one turn");
            let mut m = self.pieces[i].map.inverse();
            if wrapped {
                m = m.compose(&Mobius::shift(&BigInt::from(1)));
            }
            raw.push(Piece { start: b.clone(), map: m });
        }
        CircleHomeo { pieces: raw }.reconcile().expect("inverse of a valid map is valid")
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &CircleHomeo) -> CircleHomeo {
        let inv = other.inverse();
        let mut breaks: Vec<Qn> = other.pieces.iter().map(|p| p.start.clone()).collect();
        for p in &self.pieces {
            breaks.push(inv.apply(&CirclePoint::new(p.start.clone())).angle().clone());
        }
        breaks.sort();
        breaks.dedup();
        let two = Qn::from_int(2);
        let mut raw = Vec::with_capacity(breaks.len());
        for (k, b) in breaks.iter().enumerate() {
            let e = breaks.get(k + 1).cloned().unwrap_or_else(Qn::one);
            let mid = &(b + &e) / &two;
            let hm = other.lift(&mid);
            let n = hm.floor();
            let f = hm.add_int(&-n.clone());
            let gm = &self.pieces[self.piece_index(&f)].map;
            let m = Mobius::shift(&n)
                .compose(gm)
                .compose(&Mobius::shift(&-n))
                .compose(&other.pieces[other.piece_index(&mid)].map);
            raw.push(Piece { start: b.clone(), map: m });
        }
        CircleHomeo { pieces: raw }.reconcile().expect("composition of valid maps is valid")
    }

    pub fn is_identity(&self) -> bool {
        self.pieces.len() == 1 && self.pieces[0].map == Mobius::identity()
    }

    /// Images of the probe points `k/64`.
    pub fn probe_signature(&self) -> Vec<CirclePoint> {
        (0..PROBE_COUNT).map(|k| self.apply(&CirclePoint::ratio(k, PROBE_COUNT))).collect()
    }

    /// Fixed points on the circle; exact where the quadratic formula stays in
    /// the field, bracketed otherwise.
    pub fn fixed_points(&self) -> Vec<FixedPoint> {
        let field = self.field();
        let mut out: Vec<FixedPoint> = Vec::new();
        for (i, pc) in self.pieces.iter().enumerate() {
            let (b, e) = (pc.start.clone(), self.end_of(i));
            let m = &pc.map;
            let vb = &m.eval(&b) - &b;
            let ve = &m.eval(&e) - &e;
            let lo: BigInt = std::cmp::min(vb.floor(), ve.floor()) - 1;
            let hi: BigInt = std::cmp::max(vb.floor(), ve.floor()) + 1;
            let mut k = lo;
            while k <= hi {
                let kq = Qn::rational(BigRational::from_integer(k.clone()));
                // r t² + (s + r k − p) t + (s k − q) = 0
                let a2 = m.r.clone();
                let a1 = &(&m.s + &(&m.r * &kq)) - &m.p;
                let a0 = &(&m.s * &kq) - &m.q;
                let in_piece = |t: &Qn| *t >= b && *t < e;
                if a2.is_zero() {
                    if a1.is_zero() {
                        if a0.is_zero() {
                            out.push(FixedPoint::Arc {
                                from: CirclePoint::new(b.clone()),
                                to: CirclePoint::new(e.clone()),
                            });
                        }
                    } else {
                        let t = &(-&a0) / &a1;
                        if in_piece(&t) {
                            out.push(FixedPoint::Exact { at: CirclePoint::new(t) });
                        }
                    }
                } else {
                    let disc = &(&a1 * &a1) - &(&(&Qn::from_int(4) * &a2) * &a0);
                    if disc.sign() >= 0 {
                        match disc.sqrt_in(field) {
                            Some(sq) if sq.compatible(&a1) => {
                                let den = &Qn::from_int(2) * &a2;
                                for sgn in [1i64, -1] {
                                    let t = &(&(-&a1) + &(&Qn::from_int(sgn) * &sq)) / &den;
                                    if in_piece(&t) {
                                        out.push(FixedPoint::Exact { at: CirclePoint::new(t) });
                                    }
                                }
                            }
                            _ => out.extend(bracket_roots(&a2, &a1, &a0, &b, &e)),
                        }
                    }
                }
                k += 1;
            }
        }
        dedup_fixed(out)
    }

    /// Whether the map fixes the given point exactly.
    pub fn fixes(&self, p: &CirclePoint) -> bool {
        &self.apply(p) == p
    }
}

fn quad_at(a2: &Qn, a1: &Qn, a0: &Qn, t: &Qn) -> Qn {
    &(&(&(a2 * t) + a1) * t) + a0
}

fn bracket_roots(a2: &Qn, a1: &Qn, a0: &Qn, b: &Qn, e: &Qn) -> Vec<FixedPoint> {
    let vertex = &(-a1) / &(&Qn::from_int(2) * a2);
    let mut cuts = vec![b.clone()];
    if vertex > *b && vertex < *e {
        cuts.push(vertex);
    }
    cuts.push(e.clone());
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (mut lo, mut hi) = (w[0].clone(), w[1].clone());
        let (sl, sh) = (quad_at(a2, a1, a0, &lo).sign(), quad_at(a2, a1, a0, &hi).sign());
        if sl == 0 || sl == sh || sh == 0 {
            continue;
        }
        for _ in 0..20 {
            let mid = &(&lo + &hi) / &Qn::from_int(2);
            if quad_at(a2, a1, a0, &mid).sign() == sl {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(FixedPoint::Bracket { lo: CirclePoint::new(lo), hi: CirclePoint::new(hi) });
    }
    out
}

fn dedup_fixed(v: Vec<FixedPoint>) -> Vec<FixedPoint> {
    let mut out: Vec<FixedPoint> = Vec::new();
    for f in v {
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

impl fmt::Debug for CircleHomeo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.pieces.iter().map(|p| (&p.start, &p.map))).finish()
    }
}

#[derive(Serialize, Deserialize)]
struct HomeoRepr {
    pieces: Vec<(CirclePoint, [[Qn; 2]; 2])>,
}

impl Serialize for CircleHomeo {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HomeoRepr {
            pieces: self
                .pieces
                .iter()
                .map(|p| {
                    let m = &p.map;
                    (CirclePoint::new(p.start.clone()), [[m.p.clone(), m.q.clone()], [m.r.clone(), m.s.clone()]])
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CircleHomeo {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = HomeoRepr::deserialize(de)?;
        let raw = r.pieces.into_iter().map(|(b, [[p, q], [rr, s]])| (b, Mobius::new(p, q, rr, s))).collect();
        CircleHomeo::from_pieces(raw).map_err(D::Error::custom)
    }
}

/// One letter: a generator or its inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub gen: u16,
    pub inv: bool,
}

impl Letter {
    pub fn inverse(self) -> Letter {
        Letter { gen: self.gen, inv: !self.inv }
    }
}

/// A freely reduced word; `a b` means `a ∘ b`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn render(&self, names: &[String]) -> String {
        if self.0.is_empty() {
            return "1".into();
        }
        self.0
            .iter()
            .map(|l| {
                let n = &names[l.gen as usize];
                if l.inv {
                    format!("{n}^-1")
                } else {
                    n.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| l.inverse()).collect())
    }

    pub fn concat(&self, o: &Word) -> Word {
        let mut v = self.0.clone();
        for &l in &o.0 {
            if v.last() == Some(&l.inverse()) {
                v.pop();
            } else {
                v.push(l);
            }
        }
        Word(v)
    }

    /// Parses `"a b^-1 a"`; `"1"` is the identity.
    pub fn parse(s: &str, names: &[String]) -> Result<Word> {
        let mut out = Word::default();
        for tok in s.split_whitespace() {
            if tok == "1" {
                continue;
            }
            let (name, inv) = match tok.strip_suffix("^-1") {
                Some(n) => (n, true),
                None => (tok, false),
            };
            let gen = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| ForgeError::Parse(format!("unknown generator `{name}`")))?;
            out = out.concat(&Word(vec![Letter { gen: gen as u16, inv }]));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct BallElement {
    pub word: Word,
    pub map: CircleHomeo,
}

/// Reduced words up to a radius, with probe-equal maps merged.
#[derive(Clone, Debug)]
pub struct GroupBall {
    pub names: Vec<String>,
    pub radius: u32,
    pub truncated: bool,
    pub elements: Vec<BallElement>,
    /// `(kept word, merged word)` pairs identified by probe equality.
    pub merges: Vec<(String, String)>,
    index: HashMap<Vec<CirclePoint>, usize>,
}

impl GroupBall {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn render(&self, w: &Word) -> String {
        w.render(&self.names)
    }

    /// Nontrivial elements, shortest first.
    pub fn nontrivial(&self) -> impl Iterator<Item = &BallElement> {
        self.elements.iter().filter(|e| !e.word.is_empty())
    }

    /// Looks up a map by probe equality.
    pub fn find(&self, h: &CircleHomeo) -> Option<&BallElement> {
        self.index.get(&h.probe_signature()).map(|&i| &self.elements[i])
    }
}

/// A finitely generated group acting on the circle.
pub struct GroupAction {
    pub field_d: u64,
    pub names: Vec<String>,
    pub generators: Vec<CircleHomeo>,
    cache: Mutex<BTreeMap<u32, Arc<GroupBall>>>,
}

impl Clone for GroupAction {
    fn clone(&self) -> Self {
        GroupAction::new(self.field_d, self.names.clone(), self.generators.clone())
    }
}

impl fmt::Debug for GroupAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupAction").field("field_d", &self.field_d).field("names", &self.names).finish()
    }
}

impl GroupAction {
    pub fn new(field_d: u64, names: Vec<String>, generators: Vec<CircleHomeo>) -> Self {
        GroupAction { field_d, names, generators, cache: Mutex::new(BTreeMap::new()) }
    }

    pub fn trivial() -> Self {
        GroupAction::new(0, vec![], vec![])
    }

    pub fn letter_map(&self, l: Letter) -> CircleHomeo {
        let g = &self.generators[l.gen as usize];
        if l.inv {
            g.inverse()
        } else {
            g.clone()
        }
    }

    pub fn eval_word(&self, w: &Word) -> CircleHomeo {
        w.0.iter().fold(CircleHomeo::identity(), |acc, &l| acc.compose(&self.letter_map(l)))
    }

    pub fn parse_word(&self, s: &str) -> Result<Word> {
        Word::parse(s, &self.names)
    }

    /// The ball of the given radius, cached.
    pub fn ball(&self, radius: u32) -> Arc<GroupBall> {
        let capped = radius.min(MAX_RADIUS);
        if let Some(b) = self.cache.lock().unwrap().get(&capped) {
            let mut b = (**b).clone();
            b.truncated = radius > MAX_RADIUS;
            return Arc::new(b);
        }
        let built = Arc::new(self.build_ball(capped));
        self.cache.lock().unwrap().insert(capped, built.clone());
        if radius > MAX_RADIUS {
            let mut b = (*built).clone();
            b.truncated = true;
            return Arc::new(b);
        }
        built
    }

    fn build_ball(&self, radius: u32) -> GroupBall {
        let letters: Vec<Letter> = (0..self.generators.len() as u16)
            .flat_map(|g| [Letter { gen: g, inv: false }, Letter { gen: g, inv: true }])
            .collect();
        let letter_maps: Vec<CircleHomeo> = letters.iter().map(|&l| self.letter_map(l)).collect();
        let id = CircleHomeo::identity();
        let mut elements = vec![BallElement { word: Word::default(), map: id.clone() }];
        let mut index = HashMap::new();
        index.insert(id.probe_signature(), 0usize);
        let mut merges = Vec::new();
        let mut frontier = vec![0usize];
        for _ in 0..radius {
            let mut next = Vec::new();
            for &i in &frontier {
                for (li, &l) in letters.iter().enumerate() {
                    if elements[i].word.0.last() == Some(&l.inverse()) {
                        continue;
                    }
                    let map = elements[i].map.compose(&letter_maps[li]);
                    let mut word = elements[i].word.clone();
                    word.0.push(l);
                    let sig = map.probe_signature();
                    if let Some(&j) = index.get(&sig) {
                        let kept = elements[j].word.render(&self.names);
                        let merged = word.render(&self.names);
                        log::debug!("ball merge: {merged} = {kept}");
                        merges.push((kept, merged));
                        continue;
                    }
                    index.insert(sig, elements.len());
                    next.push(elements.len());
                    elements.push(BallElement { word, map });
                }
            }
            frontier = next;
        }
        GroupBall { names: self.names.clone(), radius, truncated: false, elements, merges, index }
    }
}

/// First enumerated leaf whose image under `g` or `g⁻¹` is not a member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum InvarianceReport {
    Ok { depth: u32, checked: usize },
    Witness { leaf: Leaf, image: Leaf, inverse: bool },
    OracleInconsistent { image: Leaf, member: Leaf },
}

pub fn check_invariance(src: &AlmostLamination, g: &CircleHomeo, depth: u32) -> InvarianceReport {
    let leaves = src.enumerate(depth);
    let ginv = g.inverse();
    for l in leaves.iter() {
        for (map, inverse) in [(g, false), (&ginv, true)] {
            let image = map.apply_leaf(l);
            if !src.contains(&image) {
                return InvarianceReport::Witness { leaf: l.clone(), image, inverse };
            }
        }
    }
    for l in leaves.iter() {
        let image = g.apply_leaf(l);
        if let Some(m) = leaves.iter().find(|m| image.linked(m) == Linkage::Linked) {
            return InvarianceReport::OracleInconsistent { image, member: m.clone() };
        }
    }
    InvarianceReport::Ok { depth, checked: leaves.len() }
}

/// Whether `g` keeps (`+1`) or reverses (`−1`) the canonical orientation.
pub fn orientation_character(g: &CircleHomeo, src: &AlmostLamination, depth: u32) -> Result<i8> {
    let base = src.enumerate(depth);
    let mut all: Vec<Leaf> = base.to_vec();
    for l in base.iter() {
        let im = g.apply_leaf(l);
        if !all.contains(&im) {
            all.push(im);
        }
    }
    let orientation = orient(&all).map_err(|w| ForgeError::NonOrientable(format!("{w:?}")))?;
    let mut verdict: Option<i8> = None;
    for l in base.iter() {
        let (tail, head) = orientation.oriented(l);
        let im = g.apply_leaf(l);
        let (it, ih) = orientation.oriented(&im);
        let c = if g.apply(&tail) == it && g.apply(&head) == ih { 1 } else { -1 };
        match verdict {
            None => verdict = Some(c),
            Some(v) if v != c => {
                return Err(ForgeError::Inconsistent(format!("orientation character is mixed at leaf {l:?}")))
            }
            _ => {}
        }
    }
    Ok(verdict.unwrap_or(1))
}

/// Reidemeister–Schreier generators of the kernel of the character, on the
/// transversal `{1, a}` with `a` the first generator of character `−1`.
pub fn orientable_doubling(names: &[String], characters: &[i8]) -> Vec<Word> {
    let letter = |g: usize, inv: bool| Letter { gen: g as u16, inv };
    let Some(a) = characters.iter().position(|&c| c == -1) else {
        return (0..names.len()).map(|g| Word(vec![letter(g, false)])).collect();
    };
    let mut out = vec![Word(vec![letter(a, false), letter(a, false)])];
    for (x, &c) in characters.iter().enumerate() {
        if x == a {
            continue;
        }
        if c == 1 {
            out.push(Word(vec![letter(x, false)]));
            out.push(Word(vec![letter(a, false), letter(x, false), letter(a, true)]));
        } else {
            out.push(Word(vec![letter(x, false), letter(a, true)]));
            out.push(Word(vec![letter(a, false), letter(x, false)]));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    Expands,
    Contracts,
    Neither,
}

impl Expansion {
    pub fn flipped(self) -> Expansion {
        match self {
            Expansion::Expands => Expansion::Contracts,
            Expansion::Contracts => Expansion::Expands,
            Expansion::Neither => Expansion::Neither,
        }
    }
}

/// How `g` moves `probe` inside the arc of `leaf` that contains it. The arc
/// runs counter-clockwise from `base` to `far`; expanding means pushing the
/// probe away from `base`.
pub fn expansion_type(g: &CircleHomeo, leaf: &Leaf, probe: &CirclePoint) -> Result<Expansion> {
    if !g.fixes(leaf.lo()) || !g.fixes(leaf.hi()) {
        return Err(ForgeError::Precondition(format!("map does not fix both ends of {leaf:?}")));
    }
    if probe == leaf.lo() || probe == leaf.hi() {
        return Err(ForgeError::Degenerate("probe is a leaf endpoint".into()));
    }
    let (base, far) =
        if in_open_arc(leaf.lo(), leaf.hi(), probe) { (leaf.lo(), leaf.hi()) } else { (leaf.hi(), leaf.lo()) };
    let image = g.apply(probe);
    Ok(if &image == probe {
        Expansion::Neither
    } else if in_open_arc(probe, far, &image) {
        Expansion::Expands
    } else {
        debug_assert!(in_open_arc(base, probe, &image));
        Expansion::Contracts
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lamination::Sign;

    fn q(n: i64, d: i64) -> Qn {
        Qn::from_ratio(n, d)
    }

    fn pt(n: i64, d: i64) -> CirclePoint {
        CirclePoint::ratio(n, d)
    }

    /// `x ↦ 2x/(2x+1)` on `[0, 1/2]`, conjugated copy on `[1/2, 1]`.
    pub(crate) fn doubling_model() -> CircleHomeo {
        let m0 = Mobius::from_ints(2, 0, 2, 1);
        // y = x − 1/2 ↦ 2y/(2y+1) + 1/2
        let m1 = Mobius::affine(Qn::one(), q(1, 2)).compose(&m0).compose(&Mobius::affine(Qn::one(), q(-1, 2)));
        CircleHomeo::from_pieces(vec![(pt(0, 1), m0), (pt(1, 2), m1)]).unwrap()
    }

    fn free_pair() -> GroupAction {
        let a = doubling_model();
        let r = CircleHomeo::rotation(&q(1, 3));
        let b = r.compose(&a).compose(&r.inverse());
        GroupAction::new(0, vec!["a".into(), "b".into()], vec![a, b])
    }

    #[test]
    fn rotation_and_identity() {
        let r = CircleHomeo::rotation(&q(1, 4));
        assert_eq!(r.apply(&pt(1, 8)), pt(3, 8));
        assert_eq!(r.apply(&pt(7, 8)), pt(1, 8));
        assert_eq!(CircleHomeo::identity().apply(&pt(3, 7)), pt(3, 7));
        assert!(r.compose(&r.inverse()).is_identity());
        assert!(r.compose(&r).compose(&r).compose(&r).is_identity());
    }

    #[test]
    fn validation_rejects_bad_maps() {
        let bad = CircleHomeo::from_pieces(vec![(pt(0, 1), Mobius::from_ints(-1, 1, 0, 1))]);
        assert!(bad.is_err());
        let twice = CircleHomeo::from_pieces(vec![(pt(0, 1), Mobius::from_ints(2, 0, 0, 1))]);
        assert!(twice.is_err());
    }

    #[test]
    fn wrapping_pieces_are_split() {
        let h = CircleHomeo::from_pieces(vec![(pt(1, 2), Mobius::affine(Qn::one(), q(1, 8)))]).unwrap();
        assert_eq!(h.apply(&pt(0, 1)), pt(1, 8));
        assert_eq!(h.apply(&pt(15, 16)), pt(1, 16));
        assert_eq!(h.piece_count(), 1);
    }

    #[test]
    fn inverse_and_composition_of_doubling() {
        let g = doubling_model();
        let gi = g.inverse();
        for k in 0..32 {
            let p = pt(k, 32);
            assert_eq!(gi.apply(&g.apply(&p)), p);
        }
        assert!(g.compose(&gi).is_identity());
        assert_eq!(g.apply(&pt(1, 64)), pt(1, 33));
    }

    #[test]
    fn ball_counts() {
        assert_eq!(free_pair().ball(2).len(), 17);
        let one = GroupAction::new(0, vec!["g".into()], vec![doubling_model()]);
        assert_eq!(one.ball(3).len(), 7);
        let inv = GroupAction::new(0, vec!["g".into()], vec![CircleHomeo::rotation(&q(1, 2))]);
        let b = inv.ball(3);
        assert_eq!(b.len(), 2);
        assert!(!b.merges.is_empty());
        assert!(one.ball(9).truncated);
    }

    #[test]
    fn ball_is_monotone_in_radius() {
        let g = free_pair();
        let small = g.ball(1);
        let big = g.ball(2);
        for e in &small.elements {
            assert!(big.find(&e.map).is_some());
        }
    }

    #[test]
    fn word_rendering_and_parsing() {
        let names = vec!["a".to_string(), "b".to_string()];
        let w = Word::parse("a b^-1 a", &names).unwrap();
        assert_eq!(w.render(&names), "a b^-1 a");
        assert_eq!(Word::default().render(&names), "1");
        assert_eq!(Word::parse("a a^-1", &names).unwrap(), Word::default());
    }

    #[test]
    fn expansion_types() {
        let g = doubling_model();
        let leaf = Leaf::new(pt(0, 1), pt(1, 2), Sign::Plus).unwrap();
        assert_eq!(expansion_type(&g, &leaf, &pt(1, 64)).unwrap(), Expansion::Expands);
        assert_eq!(expansion_type(&g.inverse(), &leaf, &pt(1, 64)).unwrap(), Expansion::Contracts);
        assert_eq!(expansion_type(&CircleHomeo::identity(), &leaf, &pt(1, 64)).unwrap(), Expansion::Neither);
        let r = CircleHomeo::rotation(&q(1, 4));
        assert!(expansion_type(&r, &leaf, &pt(1, 64)).is_err());
    }

    #[test]
    fn doubling_is_reidemeister_schreier() {
        let names = vec!["a".to_string(), "b".to_string()];
        let gens = orientable_doubling(&names, &[-1, 1]);
        let shown: Vec<String> = gens.iter().map(|w| w.render(&names)).collect();
        assert_eq!(shown, vec!["a a", "b", "a b a^-1"]);
        assert_eq!(orientable_doubling(&names[..1], &[-1]).len(), 1);
        assert_eq!(orientable_doubling(&names, &[1, 1]).len(), 2);
    }

    #[test]
    fn fixed_points_of_doubling() {
        let fx = doubling_model().fixed_points();
        let exact: Vec<CirclePoint> = fx
            .iter()
            .filter_map(|f| match f {
                FixedPoint::Exact { at } => Some(at.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(exact, vec![pt(0, 1), pt(1, 2)]);
        assert!(CircleHomeo::rotation(&q(1, 5)).fixed_points().is_empty());
    }

    #[test]
    fn fixed_points_can_be_irrational() {
        // x ↦ x / (1 − x) … restricted: use x ↦ (2x+1)/(x+1) − 1 = x/(x+1) shifted so the fixed point is irrational
        let m = Mobius::from_ints(1, 1, 1, 2); // (x+1)/(x+2), fixed where x² + x − 1 = 0
        let affine_back = Mobius::affine(Qn::one(), Qn::zero());
        let lift = affine_back.compose(&m);
        // on [0,1) this maps into [1/2, 2/3): extend to a circle map by a second piece
        let end = lift.eval(&Qn::one());
        let g = CircleHomeo::from_pieces(vec![
            (pt(0, 1), lift),
            (pt(99, 100), {
                // linear join from (99/100, f(99/100)) to (1, 1 + f(0))
                let x0 = q(99, 100);
                let y0 = m.eval(&x0);
                let y1 = &m.eval(&Qn::zero()) + &Qn::one();
                let slope = &(&y1 - &y0) / &(&Qn::one() - &x0);
                Mobius::affine(slope.clone(), &y0 - &(&slope * &x0))
            }),
        ]);
        let _ = end;
        let g = g.unwrap();
        let fx = g.fixed_points();
        let golden = Qn::new(
            num_rational::BigRational::new((-1).into(), 2.into()),
            num_rational::BigRational::new(1.into(), 2.into()),
            5,
        );
        assert!(
            fx.contains(&FixedPoint::Exact { at: CirclePoint::new(golden) })
                || fx.iter().any(|f| matches!(f, FixedPoint::Bracket { .. }))
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn homeo() -> impl Strategy<Value = CircleHomeo> {
            (0usize..4, 0i64..16, 0usize..3).prop_map(|(c, rot, pow)| {
                let r = CircleHomeo::rotation(&q(rot, 16));
                let mut g = doubling_model();
                for _ in 0..pow {
                    g = g.compose(&doubling_model());
                }
                let g = if c % 2 == 0 { g } else { g.inverse() };
                r.compose(&g).compose(&r.inverse())
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(250))]
            #[test]
            fn apply_respects_composition(g in homeo(), h in homeo(), n in 0i64..97) {
                let p = pt(n, 97);
                prop_assert_eq!(g.compose(&h).apply(&p), g.apply(&h.apply(&p)));
            }

            #[test]
            fn inverse_is_two_sided(g in homeo(), n in 0i64..61) {
                let p = pt(n, 61);
                prop_assert_eq!(g.inverse().apply(&g.apply(&p)), p.clone());
                prop_assert_eq!(g.apply(&g.inverse().apply(&p)), p);
            }

            #[test]
            fn expansion_flips_under_inverse(k in 1i64..31) {
                let g = doubling_model();
                let leaf = Leaf::new(pt(0, 1), pt(1, 2), Sign::Plus).unwrap();
                let p = pt(k, 64);
                let e = expansion_type(&g, &leaf, &p).unwrap();
                prop_assert_eq!(expansion_type(&g.inverse(), &leaf, &p).unwrap(), e.flipped());
            }
        }
    }
}
