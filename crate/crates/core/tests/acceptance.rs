//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use forge_core::action::{check_invariance, InvarianceReport};
use forge_core::certify::{certify, CertifyParams};
use forge_core::flow::{build_flow, build_h, check_collapse, FlowParams, LeafPoint, SingularLeaf, StarComplex};
use forge_core::fried::{slope_distance, surgery_prong, Slope, SurgeryOrbit};
use forge_core::gallery::{self, Example};
use forge_core::io::{example_files, to_json};
use forge_core::lamination::{orient, orientation_is_coherent, Orientation};
use forge_core::plane::build_plane;
use forge_core::sphere::{cactus_betti, ideal_boundary};
use forge_core::svg::{render, Scene};
use forge_core::verify::{
    bifoliar_report, flowable_report, replay_b7, replay_bifoliar, B7Outcome, NearTolerance, Snapshot, Verdict,
};
use forge_core::{cyclic_order, CirclePoint, CyclicOrder, GapKind, QuadraticNumber};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<T: std::fmt::Debug>(x: T) -> String {
    format!("{x:?}")
}

fn verdict<'a>(vs: &'a [Verdict], name: &str) -> Result<&'a Verdict, String> {
    vs.iter().find(|v| v.condition == name).ok_or_else(|| format!("no verdict {name}"))
}

fn cat_map() -> Example {
    gallery::cat_map_suspension([[2, 1], [1, 1]]).expect("hyperbolic matrix")
}

// Interval oracle for a + b·√d, independent of the library's comparison code:
// √d is bracketed by integer square roots at increasing binary precision.

fn ratio(n: BigInt, d: BigInt) -> BigRational {
    BigRational::new(n, d)
}

fn enclose(a: &BigRational, b: &BigRational, d: u64, bits: u32) -> (BigRational, BigRational) {
    let scale = BigInt::one() << bits;
    let s = (BigInt::from(d) * &scale * &scale).sqrt();
    let lo = ratio(s.clone(), scale.clone());
    let hi = ratio(s + 1, scale);
    let (x, y) = (b * &lo, b * &hi);
    let (m, n) = if b.is_negative() { (y, x) } else { (x, y) };
    (a + m, a + n)
}

fn oracle_sign(a: &BigRational, b: &BigRational, d: u64) -> i8 {
    if b.is_zero() {
        return if a.is_zero() {
            0
        } else if a.is_positive() {
            1
        } else {
            -1
        };
    }
    let mut bits = 16;
    loop {
        let (lo, hi) = enclose(a, b, d, bits);
        if lo.is_positive() {
            return 1;
        }
        if hi.is_negative() {
            return -1;
        }
        bits *= 2;
    }
}

/// Fractional part of `a + b√d`, returned as the shifted rational part.
fn oracle_fract(a: &BigRational, b: &BigRational, d: u64) -> BigRational {
    let mut bits = 16;
    loop {
        let (lo, hi) = enclose(a, b, d, bits);
        if lo.floor() == hi.floor() {
            return a - lo.floor();
        }
        bits *= 2;
    }
}

fn oracle_cyclic(points: &[(BigRational, BigRational)], d: u64) -> CyclicOrder {
    let f: Vec<(BigRational, &BigRational)> = points.iter().map(|(a, b)| (oracle_fract(a, b, d), b)).collect();
    let less = |i: usize, j: usize| oracle_sign(&(&f[j].0 - &f[i].0), &(f[j].1 - f[i].1), d) > 0;
    let equal = |i: usize, j: usize| f[i].0 == f[j].0 && f[i].1 == f[j].1;
    if equal(0, 1) || equal(1, 2) || equal(0, 2) {
        return CyclicOrder::Degenerate;
    }
    let (pq, qr, rp) = (less(0, 1), less(1, 2), less(2, 0));
    if (pq && qr) || (qr && rp) || (rp && pq) {
        CyclicOrder::Positive
    } else {
        CyclicOrder::Negative
    }
}

/// A random number in Q(√d) that is often very close to zero.
fn near_zero(rng: &mut ChaCha8Rng, d: u64) -> (BigRational, BigRational) {
    let b = ratio(BigInt::from(rng.gen_range(-60i64..=60)), BigInt::from(rng.gen_range(1i64..=40)));
    let digits: u32 = rng.gen_range(0..=30);
    let scale = BigInt::from(10).pow(digits);
    let (lo, _) = enclose(&BigRational::zero(), &b, d, 128);
    let mut a = -(lo * BigRational::from_integer(scale.clone())).round() / BigRational::from_integer(scale);
    if rng.gen_bool(0.1) {
        a = BigRational::zero();
    }
    a += ratio(BigInt::from(rng.gen_range(-3i64..=3)), BigInt::from(rng.gen_range(1i64..=7)));
    (a, b)
}

fn exact_arithmetic() -> Check {
    const FIELDS: [u64; 6] = [2, 3, 5, 6, 7, 13];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut disagreements = 0;
    let (mut signs, mut orders) = (0, 0);
    for i in 0..10_000 {
        let d = FIELDS[rng.gen_range(0..FIELDS.len())];
        if i % 2 == 0 {
            let (a, b) = near_zero(&mut rng, d);
            let x = QuadraticNumber::new(a.clone(), b.clone(), d);
            disagreements += usize::from(x.sign() != oracle_sign(&a, &b, d));
            signs += 1;
        } else {
            let base = near_zero(&mut rng, d);
            let mut raw = vec![base.clone()];
            for _ in 0..2 {
                raw.push(if rng.gen_bool(0.1) { base.clone() } else { near_zero(&mut rng, d) });
            }
            let pts: Vec<CirclePoint> =
                raw.iter().map(|(a, b)| CirclePoint::new(QuadraticNumber::new(a.clone(), b.clone(), d))).collect();
            disagreements += usize::from(cyclic_order(&pts[0], &pts[1], &pts[2]) != oracle_cyclic(&raw, d));
            orders += 1;
        }
    }
    ensure(disagreements == 0, format!("{disagreements} disagreements"))?;
    Ok(format!("{signs} signs and {orders} cyclic orders agree with the interval oracle"))
}

fn bifoliar_verifier() -> Check {
    let mut times = Vec::new();
    let t = Instant::now();
    let sq = gallery::square_pair();
    let r = bifoliar_report(&sq.plus, &sq.minus, 2).map_err(e)?;
    for c in ["iv", "v", "vi"] {
        ensure(verdict(&r, c)?.is_pass(), format!("square fixture: {c} did not pass"))?;
    }
    times.push(t.elapsed());

    let t = Instant::now();
    let shared = gallery::shared_side_pair();
    let r = bifoliar_report(&shared.plus, &shared.minus, 1).map_err(e)?;
    let vi = verdict(&r, "vi")?;
    ensure(vi.is_fail(), "shared side: vi did not fail")?;
    ensure(replay_bifoliar(vi, &shared.plus, &shared.minus, 1).map_err(e)?, "shared side witness does not replay")?;
    times.push(t.elapsed());

    let t = Instant::now();
    let cat = gallery::cataclysm_fixture(true);
    let r = bifoliar_report(&cat.plus, &cat.minus, 1).map_err(e)?;
    let vii = verdict(&r, "vii")?;
    ensure(vii.is_fail(), "cataclysm mutation: vii did not fail")?;
    ensure(replay_bifoliar(vii, &cat.plus, &cat.minus, 1).map_err(e)?, "cataclysm witness does not replay")?;
    times.push(t.elapsed());

    let slowest = times.iter().max().copied().unwrap_or_default();
    ensure(slowest < Duration::from_secs(1), format!("slowest fixture took {slowest:?}"))?;
    Ok("square passes iv, v, vi; shared side fails vi; cataclysm mutation fails vii; witnesses replay".into())
}

fn count_orientations(leaves: &[forge_core::Leaf]) -> usize {
    (0u32..(1 << leaves.len()))
        .filter(|mask| {
            let choices: Vec<bool> = (0..leaves.len()).map(|i| mask >> i & 1 == 1).collect();
            orientation_is_coherent(leaves, &Orientation::from_choices(leaves, &choices))
        })
        .count()
}

fn orientability() -> Check {
    let w = orient(&gallery::triangle()).err().ok_or("triangle was oriented")?;
    ensure(w.kind == GapKind::Polygon { sides: 3 }, format!("triangle witness is {:?}", w.kind))?;
    let mut fixtures = Vec::new();
    for sides in [4usize, 6, 8] {
        let f = gallery::prong_fixture(sides).map_err(e)?;
        fixtures.push((format!("{sides}-gon"), f.example.plus.seeds.clone()));
        fixtures.push((format!("{sides}-gon dual"), f.example.minus.seeds.clone()));
    }
    fixtures.push(("square".into(), gallery::square_pair().plus.seeds.clone()));
    for (name, leaves) in &fixtures {
        let o = orient(leaves).map_err(|g| format!("{name}: not orientable ({:?})", g.kind))?;
        ensure(o.components() == 1, format!("{name}: {} components", o.components()))?;
        let n = count_orientations(leaves);
        ensure(n == 2, format!("{name}: {n} coherent orientations"))?;
    }
    Ok(format!("triangle fails with a 3-gon; {} even fixtures have exactly two orientations", fixtures.len()))
}

fn flowable_pipeline() -> Check {
    let tol = NearTolerance::new(QuadraticNumber::from_ratio(1, 16));
    let (depth, radius) = (4, 4);
    let cat = cat_map();
    for (name, g) in cat.action.names.iter().zip(&cat.action.generators) {
        for lam in [&cat.plus, &cat.minus] {
            let r = check_invariance(lam, g, depth);
            ensure(matches!(r, InvarianceReport::Ok { .. }), format!("invariance under {name}: {r:?}"))?;
        }
    }
    let r = flowable_report(&cat.action, &cat.plus, &cat.minus, depth, radius, &tol).map_err(e)?;
    for c in ["B1", "B4", "B7"] {
        ensure(verdict(&r, c)?.is_pass(), format!("cat map {c}: {:?}", verdict(&r, c)?.status))?;
    }
    let broken = gallery::broken_translation();
    let r = flowable_report(&broken.action, &broken.plus, &broken.minus, depth, radius, &tol).map_err(e)?;
    let b7 = verdict(&r, "B7")?;
    ensure(b7.is_fail(), "broken translation passed B7")?;
    let outcome: B7Outcome = serde_json::from_value(b7.witness.clone().ok_or("no witness")?).map_err(e)?;
    let B7Outcome::Witness { word, .. } = &outcome else { return Err("witness is not a word".into()) };
    let snap = Snapshot::new(&broken.action, &broken.plus, &broken.minus, depth, radius);
    ensure(replay_b7(&broken.action, &snap, &tol, &outcome).map_err(e)?, "B7 witness does not replay")?;
    Ok(format!("cat map passes invariance, B1, B4, B7; broken translation fails B7 with word {word}"))
}

fn prong_leaf(sides: usize) -> Result<(SingularLeaf, forge_core::CircleHomeo), String> {
    let f = gallery::prong_fixture(sides).map_err(e)?;
    let leaf = SingularLeaf::from_polygons(&f.plus_vertices, &f.minus_vertices).map_err(e)?;
    let action = &f.example.action;
    Ok((leaf, action.eval_word(&action.parse_word("g").map_err(e)?)))
}

fn collapse_construction() -> Check {
    let (leaf, g) = prong_leaf(4)?;
    let c = build_h(&leaf, &g).map_err(e)?;
    let report = check_collapse(&c, 64).map_err(e)?;
    for name in ["signs", "monotone", "orbit_relation", "further", "equivariant"] {
        let check = report.check(name).ok_or(format!("missing check {name}"))?;
        ensure(check.pass, format!("{name} failed: {:?}", check.witness))?;
    }
    Ok(format!("all collapse properties hold on {} samples", report.samples))
}

/// Components of `E_y` in the whole sample graph, by depth-first search.
fn brute_force_components(cx: &StarComplex, leaf: &SingularLeaf, y: usize) -> usize {
    let members: BTreeSet<usize> =
        (0..cx.points.len()).filter(|&v| leaf.in_ray(&cx.points[v], &cx.points[y])).collect();
    let mut seen = BTreeSet::new();
    let mut count = 0;
    for &v in &members {
        if !seen.insert(v) {
            continue;
        }
        count += 1;
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for &(a, b) in &cx.edges {
                let w = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if members.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
    }
    count
}

fn transverse_count() -> Check {
    let mut seen = Vec::new();
    for n in [2usize, 3] {
        let (leaf, g) = prong_leaf(2 * n)?;
        let c = build_h(&leaf, &g).map_err(e)?;
        let cx = StarComplex::new(&c, 16, 4).map_err(e)?;
        let oracle = brute_force_components(&cx, &leaf, 0);
        for seed in [0, 1, 17] {
            let count = cx.asymptotic_count(&leaf, 0, seed);
            ensure(count == n && oracle == n, format!("n = {n}: count {count}, oracle {oracle}"))?;
        }
        ensure(matches!(cx.points[0], LeafPoint::Singularity), "node 0 is not the singularity")?;
        seen.push(n);
    }
    Ok(format!("transverse counts {seen:?} match the brute-force gluing"))
}

fn certificates() -> Check {
    let params = CertifyParams::new(4, 4, QuadraticNumber::from_ratio(1, 8), 64);
    let cat = cat_map();
    let good = certify(&cat.plus, &cat.minus, &cat.action, &params).map_err(e)?;
    let broken = gallery::broken_translation();
    let bad = certify(&broken.plus, &broken.minus, &broken.action, &params).map_err(e)?;
    for p in ["compactness", "convergence", "divergence", "expansive"] {
        ensure(good.holds(p), format!("cat map: {p} failed"))?;
        ensure(!bad.holds(p), format!("broken translation: {p} held"))?;
    }
    Ok(format!(
        "cat map certified with {} boxes and {} elements; broken translation fails all four",
        good.boxes, good.elements
    ))
}

/// First Betti number of a cycle with vertex classes glued, from V − E and
/// connected components of the glued graph.
fn brute_force_betti(n: usize, classes: &[Vec<usize>]) -> i64 {
    let mut label: Vec<usize> = (0..n).collect();
    for c in classes {
        for &v in c {
            label[v] = c[0];
        }
    }
    let vertices: BTreeSet<usize> = label.iter().copied().collect();
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (label[i], label[(i + 1) % n])).collect();
    let mut seen = BTreeSet::new();
    let mut components = 0i64;
    for &v in &vertices {
        if !seen.insert(v) {
            continue;
        }
        components += 1;
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for &(a, b) in &edges {
                let w = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
    }
    edges.len() as i64 - vertices.len() as i64 + components
}

fn boundary_quotient() -> Check {
    let cat = cat_map();
    let report = ideal_boundary(&cat.plus, &cat.minus, &cat.action, 3, 2).map_err(e)?;
    ensure(report.unlinked.is_pass(), format!("classes linked: {:?}", report.unlinked.witness))?;
    ensure(report.equivariant.is_pass(), format!("not equivariant: {:?}", report.equivariant.witness))?;
    let (mut sampled, mut hits) = (0, 0);
    for w in report.dynamics.words.iter().filter(|w| w.word.contains('t')) {
        sampled += w.sampled;
        hits += w.north_south;
    }
    ensure(sampled > 0, "no monodromy words sampled")?;
    let fraction = hits as f64 / sampled as f64;
    ensure(fraction >= 0.9, format!("source/sink on {:.1}% of samples", 100.0 * fraction))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let n = rng.gen_range(3..40);
        let mut vertices: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            vertices.swap(i, rng.gen_range(0..=i));
        }
        let mut classes = Vec::new();
        let mut rest = &vertices[..rng.gen_range(0..=n)];
        while !rest.is_empty() {
            let m = rng.gen_range(1..=rest.len().min(6));
            classes.push(rest[..m].to_vec());
            rest = &rest[m..];
        }
        let summary = cactus_betti(n, &classes).map_err(e)?;
        let oracle = brute_force_betti(n, &classes);
        let formula = 1 + classes.iter().map(|c| c.len() as i64 - 1).sum::<i64>();
        ensure(summary.betti == oracle && oracle == formula, format!("b1 {} vs oracle {oracle}", summary.betti))?;
    }
    Ok(format!(
        "{} classes unlinked and equivariant; monodromy source/sink on {:.1}%; 100 cactus families agree",
        report.classes.len(),
        100.0 * fraction
    ))
}

fn fried_arithmetic() -> Check {
    let (s18, s20) = (Slope::integral(18), Slope::integral(20));
    ensure(slope_distance(&s18, &s20) == 2, "distance between 18 and 20 is not 2")?;
    let orbit = surgery_prong(&s20, &s18).map_err(e)?;
    ensure(orbit == SurgeryOrbit::Regular { distance: 2 }, format!("surgery gives {orbit:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let (p1, q1) = (rng.gen_range(-500i64..500), rng.gen_range(1i64..500));
        let (p2, q2) = (rng.gen_range(-500i64..500), rng.gen_range(1i64..500));
        let k = rng.gen_range(1i64..8);
        let a = Slope::new(p1, q1, 1).map_err(e)?;
        let b = Slope::new(p2, q2, 1).map_err(e)?;
        let direct = (a.p as i128 * b.q as i128 - a.q as i128 * b.p as i128).unsigned_abs() as u64;
        ensure(slope_distance(&a, &b) == direct, format!("distance of {a} and {b}"))?;
        ensure(slope_distance(&a, &b.times(k).map_err(e)?) == k as u64 * direct, format!("scaling {a}, {b}, {k}"))?;
    }
    Ok("pretzel slopes give a regular orbit; 100 random pairs scale with multiplicity".into())
}

/// Serialized output of every stage for freshly built inputs.
fn pipeline_outputs(seed: u64) -> Result<Vec<String>, String> {
    let depth = 3;
    let cat = cat_map();
    let (pair, action) = example_files(&cat, "action.json");
    let tol = NearTolerance::new(QuadraticNumber::from_ratio(1, 16));
    let verify = flowable_report(&cat.action, &cat.plus, &cat.minus, depth, 3, &tol).map_err(e)?;
    let plane = build_plane(&cat.plus, &cat.minus, depth).map_err(e)?;
    let flow = build_flow(&plane, &cat.plus, &cat.minus, &cat.action, &FlowParams::new(depth, seed)).map_err(e)?;
    let cert = certify(
        &cat.plus,
        &cat.minus,
        &cat.action,
        &CertifyParams::new(depth, 2, QuadraticNumber::from_ratio(1, 8), 16),
    )
    .map_err(e)?;
    let boundary = ideal_boundary(&cat.plus, &cat.minus, &cat.action, 2, 1).map_err(e)?;
    let scene = Scene::from_pair(cat.plus.enumerate(depth).to_vec(), cat.minus.enumerate(depth).to_vec());
    let (sq_leaf, sq_g) = prong_leaf(4)?;
    let cx = StarComplex::new(&build_h(&sq_leaf, &sq_g).map_err(e)?, 16, 4).map_err(e)?;
    Ok(vec![
        to_json(&pair),
        to_json(&action),
        to_json(&verify),
        to_json(&plane),
        to_json(&flow),
        to_json(&cert),
        to_json(&boundary),
        render(&scene),
        to_json(&cx.transverse_leaves(&sq_leaf, 0, seed)),
    ])
}

fn determinism() -> Check {
    let first = pipeline_outputs(11)?;
    let second = pipeline_outputs(11)?;
    let stages = ["pair", "action", "verify", "plane", "flow", "certify", "boundary", "svg", "leaf ids"];
    for ((a, b), name) in first.iter().zip(&second).zip(stages) {
        ensure(a == b, format!("{name} differs between runs"))?;
    }
    ensure(first[7].starts_with("<svg"), "svg stage produced no document")?;
    Ok(format!("{} stages byte-identical across two runs", stages.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Check); 10] = [
        ("exact arithmetic", 5, exact_arithmetic),
        ("bifoliar verifier", 3, bifoliar_verifier),
        ("orientability", 1, orientability),
        ("flowable pipeline", 60, flowable_pipeline),
        ("collapse construction", 1, collapse_construction),
        ("transverse count", 5, transverse_count),
        ("flow-space certificates", 120, certificates),
        ("boundary quotient", 30, boundary_quotient),
        ("surgery arithmetic", 1, fried_arithmetic),
        ("determinism", 600, determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            ensure(elapsed < Duration::from_secs(*limit), format!("took {elapsed:.2?}, limit {limit} s"))
                .map(|_| detail)
        });
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2} {name}: {detail} ({:.2} s)", i + 1, elapsed.as_secs_f64());
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
