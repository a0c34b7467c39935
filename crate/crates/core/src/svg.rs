//! Disk pictures of chord families, with geodesic chords.

use std::f64::consts::PI;
use std::fmt::Write;

use crate::circle::CirclePoint;
use crate::lamination::{gaps, Leaf, Sign};

const SIZE: f64 = 512.0;
const RADIUS: f64 = 240.0;

/// What to draw: chords, shaded polygonal gaps and highlighted slit cells.
#[derive(Clone, Debug, Default)]
pub struct Scene {
    pub leaves: Vec<Leaf>,
    pub polygons: Vec<Vec<CirclePoint>>,
    pub slits: Vec<Vec<CirclePoint>>,
}

impl Scene {
    /// Chords with every gap bounded only by chords shaded.
    pub fn from_leaves(leaves: Vec<Leaf>) -> Self {
        let polygons = gaps(&leaves)
            .map(|gs| gs.into_iter().filter(|g| !g.touches_circle).map(|g| g.vertices).collect())
            .unwrap_or_default();
        Scene { leaves, polygons, slits: Vec::new() }
    }

    /// Both families, each shading its own polygonal gaps.
    pub fn from_pair(plus: Vec<Leaf>, minus: Vec<Leaf>) -> Self {
        let a = Scene::from_leaves(plus);
        let b = Scene::from_leaves(minus);
        Scene {
            leaves: a.leaves.into_iter().chain(b.leaves).collect(),
            polygons: a.polygons.into_iter().chain(b.polygons).collect(),
            slits: Vec::new(),
        }
    }
}

fn at(p: &CirclePoint) -> (f64, f64) {
    let t = 2.0 * PI * p.approx();
    (SIZE / 2.0 + RADIUS * t.cos(), SIZE / 2.0 - RADIUS * t.sin())
}

/// Path segment along the geodesic from `a` to `b`, assuming the pen is at `a`.
fn geodesic_to(out: &mut String, a: &CirclePoint, b: &CirclePoint) {
    let (x, y) = at(b);
    let turn = a.ccw_to(b).approx();
    let short = turn.min(1.0 - turn);
    if (short - 0.5).abs() < 1e-9 {
        write!(out, " L{x:.3},{y:.3}").unwrap();
        return;
    }
    let r = RADIUS * (PI * short).tan();
    let sweep = u8::from(turn < 0.5);
    write!(out, " A{r:.3},{r:.3} 0 0 {sweep} {x:.3},{y:.3}").unwrap();
}

fn start(out: &mut String, p: &CirclePoint) {
    let (x, y) = at(p);
    write!(out, "M{x:.3},{y:.3}").unwrap();
}

fn closed_path(vertices: &[CirclePoint]) -> String {
    let mut d = String::new();
    start(&mut d, &vertices[0]);
    for (i, v) in vertices.iter().enumerate() {
        geodesic_to(&mut d, v, &vertices[(i + 1) % vertices.len()]);
    }
    d.push_str(" Z");
    d
}

/// A standalone SVG document. Output depends only on the scene.
pub fn render(scene: &Scene) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(
        s,
        "<style>.plus{{stroke:#b03a2e}}.minus{{stroke:#1f618d}}.leaf{{fill:none;stroke-width:1.2}}\
         .gap{{fill:#d5d8dc;stroke:none}}.slit{{fill:#f9e79f;stroke:#b7950b}}</style>"
    )
    .unwrap();
    let c = SIZE / 2.0;
    writeln!(s, r#"<circle cx="{c}" cy="{c}" r="{RADIUS}" fill="white" stroke="black"/>"#).unwrap();
    for poly in scene.polygons.iter().filter(|p| p.len() >= 3) {
        writeln!(s, r#"<path class="gap" d="{}"/>"#, closed_path(poly)).unwrap();
    }
    for cell in scene.slits.iter().filter(|p| p.len() >= 2) {
        writeln!(s, r#"<path class="slit" d="{}"/>"#, closed_path(cell)).unwrap();
    }
    for l in &scene.leaves {
        let mut d = String::new();
        start(&mut d, l.lo());
        geodesic_to(&mut d, l.lo(), l.hi());
        let sign = match l.sign() {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        };
        writeln!(s, r#"<path class="leaf {sign}" d="{d}"/>"#).unwrap();
    }
    s.push_str("</svg>\n");
    s
}
