//! Leaf-space metrics and the flow-box property certifiers.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::action::{GroupAction, GroupBall};
use crate::circle::QuadraticNumber as Qn;
use crate::error::{ForgeError, Result};
use crate::flow::{family_metric, interior, signed_key};
use crate::lamination::{AlmostLamination, Leaf, Orientation};
use crate::verify::{crossing_key, Verdict};

/// A bounded metric on the leaves crossing a reference transversal.
///
/// Reference leaves sit at evenly spaced coordinates in `(0, 1)`; other
/// leaves are placed by linear interpolation in crossing position, with the
/// ends of the transversal at 0 and 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeafSpaceMetric {
    pub transversal: Leaf,
    keys: Vec<Qn>,
    end: Qn,
}

impl LeafSpaceMetric {
    /// Picks the first leaf of `others` crossing every reference leaf.
    pub fn new(refs: &[Leaf], others: &[Leaf]) -> Option<Self> {
        let t = others.iter().find(|t| refs.iter().all(|r| r.is_linked(t)))?;
        Some(Self::along(t, refs))
    }

    pub fn along(transversal: &Leaf, refs: &[Leaf]) -> Self {
        let mut keys: Vec<Qn> = refs.iter().filter_map(|r| crossing_key(transversal, r)).map(|k| k.at).collect();
        keys.sort();
        keys.dedup();
        LeafSpaceMetric { transversal: transversal.clone(), end: transversal.lo().ccw_to(transversal.hi()), keys }
    }

    pub fn reference_count(&self) -> usize {
        self.keys.len()
    }

    pub fn coordinate(&self, l: &Leaf) -> Option<Qn> {
        let k = crossing_key(&self.transversal, l)?.at;
        let n = self.keys.len();
        let step = Qn::from_ratio(1, n as i64 + 1);
        let at = |i: usize| &step * &Qn::from_int(i as i64);
        let i = self.keys.partition_point(|a| a < &k);
        let (k0, c0, k1, c1) = if n == 0 {
            (Qn::zero(), Qn::zero(), self.end.clone(), Qn::one())
        } else if i == 0 {
            (Qn::zero(), Qn::zero(), self.keys[0].clone(), step.clone())
        } else if i == n {
            (self.keys[n - 1].clone(), at(n), self.end.clone(), Qn::one())
        } else {
            (self.keys[i - 1].clone(), at(i), self.keys[i].clone(), at(i + 1))
        };
        let frac = &(&k - &k0) / &(&k1 - &k0);
        Some(&c0 + &(&frac * &(&c1 - &c0)))
    }

    /// `None` when either leaf misses the transversal.
    pub fn distance(&self, a: &Leaf, b: &Leaf) -> Option<Qn> {
        Some((&self.coordinate(a)? - &self.coordinate(b)?).abs())
    }
}

/// Closed coordinate intervals between consecutive cover leaves.
fn cells(metric: &LeafSpaceMetric, refs: &[Leaf]) -> Vec<(Qn, Qn)> {
    let mut cs: Vec<Qn> = refs.iter().filter_map(|r| metric.coordinate(r)).collect();
    cs.sort();
    cs.dedup();
    cs.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
}

/// Cells containing every coordinate in `cs`.
fn common_cells(cells: &[(Qn, Qn)], cs: &[&Qn]) -> Vec<usize> {
    (0..cells.len()).filter(|&i| cs.iter().all(|c| &cells[i].0 <= *c && *c <= &cells[i].1)).collect()
}

/// A flow box indexed by its cell in each leaf space and the cell of
/// negative leaves its rays reach.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowBox {
    pub plus: usize,
    pub minus: usize,
    pub ray: usize,
}

/// Finitely many flow boxes built from cells of the two leaf spaces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowBoxCover {
    pub plus_cells: Vec<(Qn, Qn)>,
    pub minus_cells: Vec<(Qn, Qn)>,
    pub boxes: Vec<FlowBox>,
    #[serde(skip)]
    index: HashSet<FlowBox>,
}

impl FlowBoxCover {
    pub fn new(plus_cells: Vec<(Qn, Qn)>, minus_cells: Vec<(Qn, Qn)>) -> Self {
        let (np, nm) = (plus_cells.len(), minus_cells.len());
        let boxes = (0..np)
            .flat_map(|plus| {
                (0..nm).flat_map(move |minus| {
                    (0..nm).filter(move |&r| r != minus).map(move |ray| FlowBox { plus, minus, ray })
                })
            })
            .collect();
        Self::with_boxes(plus_cells, minus_cells, boxes)
    }

    pub fn with_boxes(plus_cells: Vec<(Qn, Qn)>, minus_cells: Vec<(Qn, Qn)>, boxes: Vec<FlowBox>) -> Self {
        let index = boxes.iter().copied().collect();
        FlowBoxCover { plus_cells, minus_cells, boxes, index }
    }

    /// The cover with every box over one plus cell removed.
    pub fn without_plus_cell(&self, cell: usize) -> Self {
        let boxes = self.boxes.iter().copied().filter(|b| b.plus != cell).collect();
        Self::with_boxes(self.plus_cells.clone(), self.minus_cells.clone(), boxes)
    }

    /// A box holding all the given points, whose ray cell sits at least
    /// `gap` cells away from the base cell.
    pub fn find(&self, plus: &[&Qn], base: &[&Qn], ray: &[&Qn], gap: usize) -> Option<FlowBox> {
        let ps = common_cells(&self.plus_cells, plus);
        let bs = common_cells(&self.minus_cells, base);
        let rs = common_cells(&self.minus_cells, ray);
        for &p in &ps {
            for &b in &bs {
                for &r in &rs {
                    let fb = FlowBox { plus: p, minus: b, ray: r };
                    if r.abs_diff(b) >= gap.max(1) && self.index.contains(&fb) {
                        return Some(fb);
                    }
                }
            }
        }
        None
    }

    /// Whether a plane point lies over some box.
    pub fn shadow_contains(&self, plus: &Qn, minus: &Qn) -> bool {
        let ps = common_cells(&self.plus_cells, &[plus]);
        let ms = common_cells(&self.minus_cells, &[minus]);
        self.boxes.iter().any(|b| ps.contains(&b.plus) && ms.contains(&b.minus))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifyParams {
    pub depth: u32,
    pub radius: u32,
    pub eps: Qn,
    pub horizon: usize,
    /// Upper bound on sampled pairs per condition.
    pub pairs: usize,
}

impl CertifyParams {
    pub fn new(depth: u32, radius: u32, eps: Qn, horizon: usize) -> Self {
        CertifyParams { depth, radius, eps, horizon, pairs: 20 }
    }
}

/// Sampled leaves with the coordinates of their images under every ball
/// element.
pub struct CertifyContext {
    pub plus: Vec<Leaf>,
    pub minus: Vec<Leaf>,
    /// Indices of the interior sample leaves.
    pub plus_core: Vec<usize>,
    pub minus_core: Vec<usize>,
    pub cover: FlowBoxCover,
    pub ball: std::sync::Arc<GroupBall>,
    orientation: Option<Orientation>,
    plus_images: Vec<Vec<Option<Qn>>>,
    minus_images: Vec<Vec<Option<Qn>>>,
    /// Coordinates spanned by the interior negative samples.
    resolved: (Qn, Qn),
    params: CertifyParams,
}

/// Outcome of one sampled pair.
#[derive(Clone, Debug, PartialEq)]
pub enum PairOutcome {
    Vacuous,
    Pass { u: usize },
    Fail { t: usize },
}

impl CertifyContext {
    pub fn new(
        plus_src: &AlmostLamination,
        minus_src: &AlmostLamination,
        action: &GroupAction,
        params: &CertifyParams,
    ) -> Result<Self> {
        let depth = params.depth;
        let plus = plus_src.enumerate(depth).to_vec();
        let minus = minus_src.enumerate(depth).to_vec();
        let missing = || ForgeError::Precondition("no transversal crosses all sample leaves".into());
        let mp = family_metric(plus_src, &minus, depth).ok_or_else(missing)?;
        let mm = family_metric(minus_src, &plus, depth).ok_or_else(missing)?;
        let cover_depth = depth.min(1);
        let cover = FlowBoxCover::new(
            cells(&mp, &plus_src.enumerate(cover_depth)),
            cells(&mm, &minus_src.enumerate(cover_depth)),
        );
        let core = |all: &[Leaf], src: &AlmostLamination, m: &LeafSpaceMetric| -> Vec<usize> {
            let keep = interior(&crate::flow::n_samples(src, depth), m);
            (0..all.len()).filter(|&i| keep.contains(&all[i])).collect()
        };
        let plus_core = core(&plus, plus_src, &mp);
        let minus_core = core(&minus, minus_src, &mm);
        let ball = action.ball(params.radius);
        let image = |m: &LeafSpaceMetric, leaves: &[Leaf]| -> Vec<Vec<Option<Qn>>> {
            ball.elements.iter().map(|e| leaves.iter().map(|l| m.coordinate(&e.map.apply_leaf(l))).collect()).collect()
        };
        let plus_images = image(&mp, &plus);
        let minus_images = image(&mm, &minus);
        let span: Vec<&Qn> = minus_core.iter().filter_map(|&m| minus_images[0][m].as_ref()).collect();
        let resolved = match (span.iter().min(), span.iter().max()) {
            (Some(&lo), Some(&hi)) => (lo.clone(), hi.clone()),
            _ => (Qn::one(), Qn::zero()),
        };
        Ok(CertifyContext {
            plus,
            minus,
            plus_core,
            minus_core,
            cover,
            orientation: plus_src.orient(depth).ok(),
            plus_images,
            minus_images,
            resolved,
            params: params.clone(),
            ball,
        })
    }

    pub fn with_cover(mut self, cover: FlowBoxCover) -> Self {
        self.cover = cover;
        self
    }

    fn key(&self, plus: usize, minus: usize) -> Option<Qn> {
        signed_key(self.orientation.as_ref(), &self.plus[plus], &self.minus[minus])
    }

    fn resolved(&self, minus: usize) -> bool {
        self.minus_images[0][minus].as_ref().is_some_and(|c| &self.resolved.0 <= c && c <= &self.resolved.1)
    }

    /// Negative leaves met along `plus` beyond its crossing with `from`,
    /// nearest first, inside the resolved span and cut at the horizon.
    pub fn ray(&self, plus: usize, from: usize) -> Vec<usize> {
        let Some(k0) = self.key(plus, from) else { return Vec::new() };
        let mut r: Vec<(Qn, usize)> = (0..self.minus.len())
            .filter(|&m| self.resolved(m))
            .filter_map(|m| self.key(plus, m).filter(|k| k > &k0).map(|k| (k, m)))
            .collect();
        r.sort();
        r.into_iter().take(self.params.horizon).map(|(_, m)| m).collect()
    }

    /// Ray points some ball element carries into a box together with the
    /// base point; the part of the ray inside the certificate's scope.
    pub fn visible_ray(&self, plus: usize, from: usize) -> Vec<usize> {
        let Some(k0) = self.key(plus, from) else { return Vec::new() };
        let mut r: Vec<(Qn, usize)> = (0..self.minus.len())
            .filter_map(|m| self.key(plus, m).filter(|k| k > &k0).map(|k| (k, m)))
            .filter(|&(_, m)| self.cover_element(plus, from, m).is_some())
            .collect();
        r.sort();
        r.into_iter().take(self.params.horizon).map(|(_, m)| m).collect()
    }

    fn images(&self, e: usize, plus: &[usize], minus: &[usize]) -> Option<(Vec<&Qn>, Vec<&Qn>)> {
        let p = plus.iter().map(|&i| self.plus_images[e][i].as_ref()).collect::<Option<Vec<_>>>()?;
        let m = minus.iter().map(|&i| self.minus_images[e][i].as_ref()).collect::<Option<Vec<_>>>()?;
        Some((p, m))
    }

    fn word(&self, e: usize) -> String {
        self.ball.render(&self.ball.elements[e].word)
    }

    fn elements(&self) -> std::ops::Range<usize> {
        0..self.ball.elements.len()
    }

    /// Some element carrying the point `(plus ∩ base, target)` into a box.
    pub fn cover_element(&self, plus: usize, base: usize, target: usize) -> Option<usize> {
        self.elements().find(|&e| {
            self.images(e, &[plus], &[base, target])
                .is_some_and(|(p, m)| self.cover.find(&p, &m[..1], &m[1..], 1).is_some())
        })
    }

    /// First condition, same positive leaf: far ray points must be carried
    /// into a common box with the base leaves closer than `eps`.
    pub fn convergence_pair(&self, plus: usize, a: usize, b: usize) -> PairOutcome {
        if a == b {
            return PairOutcome::Vacuous;
        }
        let (Some(ka), Some(kb)) = (self.key(plus, a), self.key(plus, b)) else { return PairOutcome::Vacuous };
        let ray = self.visible_ray(plus, if ka > kb { a } else { b });
        let ok = |t: usize| {
            self.elements().any(|e| {
                self.images(e, &[plus], &[a, b, t]).is_some_and(|(p, m)| {
                    &(m[0] - m[1]).abs() < &self.params.eps && self.cover.find(&p, &m[..2], &m[2..], 1).is_some()
                })
            })
        };
        suffix(&ray, ok)
    }

    /// Second condition, same negative leaf: near ray points at a common
    /// height must be carried into a common box with the positive leaves
    /// closer than `eps`.
    pub fn convergence_dual_pair(&self, minus: usize, a: usize, b: usize) -> PairOutcome {
        if a == b {
            return PairOutcome::Vacuous;
        }
        let kb = self.key(b, minus);
        let ray: Vec<usize> = self
            .visible_ray(a, minus)
            .into_iter()
            .filter(|&t| matches!((self.key(b, t), &kb), (Some(k), Some(k0)) if &k > k0))
            .collect();
        let ok = |t: usize| {
            self.elements().any(|e| {
                self.images(e, &[a, b], &[minus, t]).is_some_and(|(p, m)| {
                    &(p[0] - p[1]).abs() < &self.params.eps && self.cover.find(&p, &m[..1], &m[1..], 1).is_some()
                })
            })
        };
        prefix(&ray, ok)
    }

    /// Whether some element puts the ray point in the compact region and
    /// the partner in its shadow.
    fn returns(&self, ray_plus: usize, base: usize, t: usize, partner: (usize, usize)) -> bool {
        self.elements().any(|e| {
            let Some((p, m)) = self.images(e, &[ray_plus, partner.0], &[base, t, partner.1]) else { return false };
            self.cover.find(&p[..1], &m[..1], &m[1..2], 2).is_some() && self.cover.shadow_contains(p[1], m[2])
        })
    }

    /// First condition, same positive leaf: near points of the ray of `a`
    /// never return while `b` sits in the shadow.
    pub fn divergence_pair(&self, plus: usize, a: usize, b: usize) -> Result<PairOutcome> {
        if a == b {
            return Err(ForgeError::Precondition("divergence needs distinct points".into()));
        }
        let ray = self.visible_ray(plus, a);
        Ok(prefix(&ray, |t| !self.returns(plus, a, t, (plus, b))))
    }

    /// Second condition, same negative leaf: far points of the ray of `c`.
    pub fn divergence_dual_pair(&self, minus: usize, c: usize, d: usize) -> Result<PairOutcome> {
        if c == d {
            return Err(ForgeError::Precondition("divergence needs distinct points".into()));
        }
        let ray = self.visible_ray(c, minus);
        Ok(suffix(&ray, |t| !self.returns(c, minus, t, (d, minus))))
    }

    /// An element moving `a` over the cover and separating the pair by more
    /// than `eps`.
    pub fn expansive_element(&self, a: (usize, usize), b: (usize, usize)) -> Option<usize> {
        self.elements().find(|&e| {
            self.images(e, &[a.0, b.0], &[a.1, b.1]).is_some_and(|(p, m)| {
                self.cover.shadow_contains(p[0], m[0])
                    && &(&(p[0] - p[1]).abs() + &(m[0] - m[1]).abs()) > &self.params.eps
            })
        })
    }

    fn crosses(&self, plus: usize, minus: usize) -> bool {
        self.plus[plus].is_linked(&self.minus[minus])
    }

    /// Interior sample leaves of one family crossing a leaf of the other,
    /// in order along it.
    fn core_along(&self, leaf: usize, plus_side: bool) -> Vec<usize> {
        if plus_side {
            let mut v: Vec<(Qn, usize)> =
                self.minus_core.iter().filter_map(|&m| self.key(leaf, m).map(|k| (k, m))).collect();
            v.sort();
            v.into_iter().map(|(_, m)| m).collect()
        } else {
            let t = &self.minus[leaf];
            let mut v: Vec<(Qn, usize)> =
                self.plus_core.iter().filter_map(|&p| crossing_key(t, &self.plus[p]).map(|k| (k.at, p))).collect();
            v.sort();
            v.into_iter().map(|(_, p)| p).collect()
        }
    }

    /// `(carrier, a, b)` for sample points `step` apart along leaves of one
    /// family.
    fn pairs(&self, plus_side: bool, step: usize) -> Vec<(usize, usize, usize)> {
        let carriers = if plus_side { &self.plus_core } else { &self.minus_core };
        let all: Vec<(usize, usize, usize)> = carriers
            .iter()
            .flat_map(|&c| {
                let along = self.core_along(c, plus_side);
                along.windows(step + 1).map(|w| (c, w[0], w[step])).collect::<Vec<_>>()
            })
            .collect();
        spread(all, self.params.pairs)
    }

    pub fn compactness(&self) -> Verdict {
        let mut samples = 0;
        for &p in &self.plus_core {
            for &m in self.minus_core.iter().filter(|&&m| self.crosses(p, m)) {
                for t in self.ray(p, m).into_iter().take(4) {
                    samples += 1;
                    if self.cover_element(p, m, t).is_none() {
                        return Verdict::fail(
                            "compactness",
                            json!({"leaf": self.plus[p], "base": self.minus[m], "target": self.minus[t], "elements": self.ball.len()}),
                        );
                    }
                }
            }
        }
        self.summarize("compactness", samples, 0)
    }

    fn summarize(&self, condition: &str, passed: usize, vacuous: usize) -> Verdict {
        if passed == 0 {
            return Verdict::vacuous(condition).with_note(format!("{vacuous} sampled pairs had no ray points"));
        }
        let v = Verdict::pass(condition, self.params.depth)
            .with_note(format!("no counterexample among {passed} samples at radius {}", self.params.radius));
        if self.ball.truncated {
            v.with_note("ball truncated")
        } else {
            v
        }
    }

    fn pair_verdict(
        &self,
        condition: &str,
        pairs: Vec<(usize, usize, usize)>,
        run: impl Fn(usize, usize, usize) -> Result<PairOutcome>,
        describe: impl Fn(usize, usize, usize, usize) -> Value,
    ) -> Result<Verdict> {
        let (mut passed, mut vacuous) = (0, 0);
        for (c, a, b) in pairs {
            match run(c, a, b)? {
                PairOutcome::Vacuous => vacuous += 1,
                PairOutcome::Pass { .. } => passed += 1,
                PairOutcome::Fail { t } => return Ok(Verdict::fail(condition, describe(c, a, b, t))),
            }
        }
        Ok(self.summarize(condition, passed, vacuous))
    }

    pub fn convergence(&self) -> Result<[Verdict; 2]> {
        let on_plus = |c: usize, a: usize, b: usize, t: usize| json!({"leaf": self.plus[c], "a": self.minus[a], "b": self.minus[b], "ray_point": self.minus[t]});
        let on_minus = |c: usize, a: usize, b: usize, t: usize| json!({"leaf": self.minus[c], "a": self.plus[a], "b": self.plus[b], "ray_point": self.minus[t]});
        Ok([
            self.pair_verdict(
                "convergence I",
                self.pairs(true, 1),
                |c, a, b| Ok(self.convergence_pair(c, a, b)),
                on_plus,
            )?,
            self.pair_verdict(
                "convergence II",
                self.pairs(false, 1),
                |c, a, b| Ok(self.convergence_dual_pair(c, a, b)),
                on_minus,
            )?,
        ])
    }

    pub fn divergence(&self) -> Result<[Verdict; 2]> {
        let on_plus = |c: usize, a: usize, b: usize, t: usize| json!({"leaf": self.plus[c], "a": self.minus[a], "b": self.minus[b], "ray_point": self.minus[t]});
        let on_minus = |c: usize, a: usize, b: usize, t: usize| json!({"leaf": self.minus[c], "a": self.plus[a], "b": self.plus[b], "ray_point": self.minus[t]});
        Ok([
            self.pair_verdict(
                "divergence I",
                self.pairs(true, DIVERGENCE_STEP),
                |c, a, b| self.divergence_pair(c, a, b),
                on_plus,
            )?,
            self.pair_verdict(
                "divergence II",
                self.pairs(false, DIVERGENCE_STEP),
                |c, a, b| self.divergence_dual_pair(c, a, b),
                on_minus,
            )?,
        ])
    }

    pub fn expansive(&self) -> Verdict {
        let mut grid: Vec<(usize, usize, usize, usize)> = Vec::new();
        for &p in &self.plus_core {
            let along = self.core_along(p, true);
            for (i, &m) in along.iter().enumerate() {
                if let Some(&m2) = along.get(i + 1) {
                    grid.push((p, m, p, m2));
                }
            }
        }
        for &m in &self.minus_core {
            for w in self.core_along(m, false).windows(2) {
                grid.push((w[0], m, w[1], m));
            }
        }
        let grid = spread(grid, self.params.pairs * 4);
        for &(pa, ma, pb, mb) in &grid {
            if self.expansive_element((pa, ma), (pb, mb)).is_none() {
                return Verdict::fail(
                    "expansive",
                    json!({"a": [self.plus[pa], self.minus[ma]], "b": [self.plus[pb], self.minus[mb]], "elements": self.ball.len()}),
                );
            }
        }
        self.summarize("expansive", grid.len(), 0)
    }

    pub fn certificate(&self) -> Result<Certificate> {
        let mut verdicts = vec![self.compactness()];
        verdicts.extend(self.convergence()?);
        verdicts.extend(self.divergence()?);
        verdicts.push(self.expansive());
        Ok(Certificate {
            depth: self.params.depth,
            radius: self.params.radius,
            eps: self.params.eps.to_string(),
            horizon: self.params.horizon,
            boxes: self.cover.boxes.len(),
            elements: self.ball.len(),
            verdicts,
        })
    }

    /// The word of the element used for a compactness sample, if any.
    pub fn cover_word(&self, plus: usize, base: usize, target: usize) -> Option<String> {
        self.cover_element(plus, base, target).map(|e| self.word(e))
    }
}

/// Divergence pairs sit this many samples apart so that ray samples resolve
/// the part of the ray near the base point.
const DIVERGENCE_STEP: usize = 3;

/// Passes when some tail of the ray succeeds; `u` is where it starts.
fn suffix(ray: &[usize], ok: impl Fn(usize) -> bool) -> PairOutcome {
    let Some(&last) = ray.last() else { return PairOutcome::Vacuous };
    let mut u = ray.len();
    while u > 0 && ok(ray[u - 1]) {
        u -= 1;
    }
    if u == ray.len() {
        PairOutcome::Fail { t: last }
    } else {
        PairOutcome::Pass { u: ray[u] }
    }
}

/// Passes when some initial segment of the ray succeeds; `u` is its end.
fn prefix(ray: &[usize], ok: impl Fn(usize) -> bool) -> PairOutcome {
    let Some(&first) = ray.first() else { return PairOutcome::Vacuous };
    let n = ray.iter().take_while(|&&t| ok(t)).count();
    if n == 0 {
        PairOutcome::Fail { t: first }
    } else {
        PairOutcome::Pass { u: ray[n - 1] }
    }
}

/// At most `k` items taken at an even stride.
fn spread<T>(all: Vec<T>, k: usize) -> Vec<T> {
    if all.len() <= k || k == 0 {
        return all;
    }
    let stride = all.len().div_ceil(k);
    all.into_iter().step_by(stride).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub depth: u32,
    pub radius: u32,
    pub eps: String,
    pub horizon: usize,
    pub boxes: usize,
    pub elements: usize,
    pub verdicts: Vec<Verdict>,
}

impl Certificate {
    /// A property holds when none of its conditions failed.
    pub fn holds(&self, property: &str) -> bool {
        self.verdicts.iter().filter(|v| v.condition.starts_with(property)).all(|v| !v.is_fail())
    }

    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| !v.is_fail())
    }
}

pub fn certify(
    plus: &AlmostLamination,
    minus: &AlmostLamination,
    action: &GroupAction,
    params: &CertifyParams,
) -> Result<Certificate> {
    CertifyContext::new(plus, minus, action, params)?.certificate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::lamination::Sign;

    fn cat(depth: u32, radius: u32) -> (gallery::Example, CertifyContext) {
        let ex = gallery::cat_map_suspension([[2, 1], [1, 1]]).unwrap();
        let cx = CertifyContext::new(
            &ex.plus,
            &ex.minus,
            &ex.action,
            &CertifyParams::new(depth, radius, Qn::from_ratio(1, 8), 64),
        )
        .unwrap();
        (ex, cx)
    }

    fn half_cells() -> Vec<(Qn, Qn)> {
        let h = Qn::from_ratio(1, 2);
        vec![(Qn::zero(), h.clone()), (h, Qn::one())]
    }

    #[test]
    fn coarse_cover_holds_every_sample() {
        let (_, cx) = cat(3, 1);
        let cover = FlowBoxCover::new(vec![(Qn::zero(), Qn::one())], half_cells());
        assert_eq!(cover.boxes.len(), 2);
        let cx = cx.with_cover(cover);
        assert!(cx.compactness().is_pass());
    }

    #[test]
    fn cat_map_is_covered_at_radius_three() {
        let (_, cx) = cat(4, 3);
        assert_eq!(cx.cover.plus_cells.len(), 4);
        assert!(cx.compactness().is_pass());
    }

    #[test]
    fn removed_boxes_leave_a_witness() {
        let (_, cx) = cat(3, 1);
        let cover = cx.cover.clone();
        let pruned = (0..cover.plus_cells.len()).fold(cover, |c, i| if i == 0 { c } else { c.without_plus_cell(i) });
        let v = cx.with_cover(pruned).compactness();
        assert!(v.is_fail());
        assert!(v.witness.unwrap()["target"].is_object());
    }

    #[test]
    fn degenerate_pairs() {
        let (_, cx) = cat(3, 2);
        let p = cx.plus_core[0];
        let m = *cx.minus_core.iter().find(|&&m| cx.plus[p].is_linked(&cx.minus[m])).unwrap();
        assert_eq!(cx.convergence_pair(p, m, m), PairOutcome::Vacuous);
        assert!(matches!(cx.divergence_pair(p, m, m), Err(ForgeError::Precondition(_))));
    }

    #[test]
    fn identity_action_does_not_expand() {
        let ex = gallery::cat_map_suspension([[2, 1], [1, 1]]).unwrap();
        let params = CertifyParams::new(4, 2, Qn::from_ratio(1, 8), 64);
        let cx = CertifyContext::new(&ex.plus, &ex.minus, &GroupAction::trivial(), &params).unwrap();
        let v = cx.expansive();
        assert!(v.is_fail(), "{v:?}");
        assert_eq!(v.witness.unwrap()["elements"], 1);
    }

    #[test]
    fn cover_lookup_respects_ray_gap() {
        let q = |n, d| Qn::from_ratio(n, d);
        let cells: Vec<(Qn, Qn)> = (0..4).map(|i| (q(i, 4), q(i + 1, 4))).collect();
        let cover = FlowBoxCover::new(cells.clone(), cells);
        let (p, b, near, far) = (q(1, 8), q(1, 8), q(3, 8), q(5, 8));
        assert!(cover.find(&[&p], &[&b], &[&near], 1).is_some());
        assert!(cover.find(&[&p], &[&b], &[&near], 2).is_none());
        assert!(cover.find(&[&p], &[&b], &[&far], 2).is_some());
        assert!(cover.find(&[&p], &[&b], &[&q(1, 16)], 1).is_none());
        assert!(cover.shadow_contains(&p, &far));
    }

    #[test]
    fn metric_is_monotone_along_transversal() {
        let t = Leaf::from_ratios((0, 1), (1, 2), Sign::Minus).unwrap();
        let refs: Vec<Leaf> =
            [1, 2, 3].iter().map(|&k| Leaf::from_ratios((k, 8), (16 - k, 16), Sign::Plus).unwrap()).collect();
        let m = LeafSpaceMetric::along(&t, &refs);
        assert_eq!(m.coordinate(&refs[1]), Some(Qn::from_ratio(1, 2)));
        let probe = Leaf::from_ratios((5, 16), (7, 8), Sign::Plus).unwrap();
        let c = m.coordinate(&probe).unwrap();
        assert!(c > Qn::from_ratio(1, 2) && c < Qn::from_ratio(3, 4));
        assert!(m.coordinate(&Leaf::from_ratios((5, 8), (3, 4), Sign::Plus).unwrap()).is_none());
    }
}
