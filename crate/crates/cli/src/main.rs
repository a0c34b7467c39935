use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use forge_core::action::{check_invariance, InvarianceReport};
use forge_core::certify::{certify, CertifyParams};
use forge_core::circle::parse_rational;
use forge_core::flow::{build_flow, FlowParams};
use forge_core::fried::{slope_distance, surgery_prong, Slope};
use forge_core::gallery::{self, Example};
use forge_core::io::{example_files, read_json, to_json, write_text, ActionFile, FlowFile, LoadedPair, PlaneFile};
use forge_core::plane::build_plane;
use forge_core::sphere::{ideal_boundary, TripleCheck};
use forge_core::svg::{render, Scene};
use forge_core::verify::{anosov_like_report, bifoliar_report, flowable_report, overall, NearTolerance};
use forge_core::{ForgeError, GroupAction, QuadraticNumber};

#[derive(Parser)]
#[command(name = "forge", version, about = "Flows from circle actions: generate, verify, build and certify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Kind {
    CatMapSuspension,
    #[value(name = "square_4prong_fixture")]
    Square4prongFixture,
    CataclysmFixture,
    BrokenTranslation,
}

#[derive(Subcommand)]
enum Command {
    /// Write pair.json and action.json for a built-in example.
    Gen {
        kind: Kind,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Cat-map matrix entries, row by row.
        #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [2, 1, 1, 1])]
        matrix: Vec<i64>,
        /// Polygon side count of the prong fixture.
        #[arg(long, default_value_t = 4)]
        sides: usize,
        /// Use the mutated cataclysm fixture.
        #[arg(long)]
        mutated: bool,
    },
    /// List the reduced words of a ball in the group.
    Ball {
        action: PathBuf,
        #[arg(long, default_value_t = 2)]
        radius: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check invariance, the bifoliar conditions and the flowable axioms.
    Verify {
        pair: PathBuf,
        action: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long, default_value_t = 3)]
        radius: u32,
        /// Arc tolerance of the small-displacement search.
        #[arg(long, default_value = "1/16")]
        arc: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the approximate bifoliated plane.
    Plane {
        pair: PathBuf,
        action: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build collapses, chart complexes and freeness samples of the flow space.
    Flow {
        plane: PathBuf,
        action: Option<PathBuf>,
        /// Defaults to the depth recorded in the plane file.
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long, default_value_t = 3)]
        radius: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the flow-space certificates on the pair and action of a flow file.
    Certify {
        flow: PathBuf,
        /// Defaults to the depth recorded in the flow file.
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long, default_value_t = 4)]
        radius: u32,
        #[arg(long, default_value = "1/8")]
        eps: String,
        #[arg(long, default_value_t = 64)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identify boundary classes and check them.
    Boundary {
        pair: PathBuf,
        action: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long, default_value_t = 2)]
        radius: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a pair or plane file as an SVG disk picture.
    Render {
        input: PathBuf,
        action: Option<PathBuf>,
        /// Defaults to the plane depth, or 3 for a pair file.
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance between surgery slopes and the resulting orbit type.
    Fried {
        /// Surgery slope, as p, p/q, k*p or k*p/q.
        #[arg(long, allow_hyphen_values = true)]
        slope: String,
        /// Degeneracy locus with multiplicity.
        #[arg(long, allow_hyphen_values = true)]
        locus: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Result of a command: the document to emit and whether its checks passed.
struct Outcome {
    text: String,
    pass: bool,
}

impl Outcome {
    fn new(text: String, pass: bool) -> Self {
        Outcome { text, pass }
    }
}

fn rational(s: &str) -> Result<QuadraticNumber> {
    Ok(QuadraticNumber::rational(parse_rational(s)?))
}

fn example(kind: Kind, matrix: &[i64], sides: usize, mutated: bool) -> Result<Example> {
    Ok(match kind {
        Kind::CatMapSuspension => gallery::cat_map_suspension([[matrix[0], matrix[1]], [matrix[2], matrix[3]]])?,
        Kind::Square4prongFixture => gallery::prong_fixture(sides)?.example,
        Kind::CataclysmFixture => gallery::cataclysm_fixture(mutated),
        Kind::BrokenTranslation => gallery::broken_translation(),
    })
}

fn gen(kind: Kind, out: &Path, matrix: &[i64], sides: usize, mutated: bool) -> Result<Outcome> {
    let ex = example(kind, matrix, sides, mutated)?;
    let (pair, action) = example_files(&ex, "action.json");
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_text(&out.join("pair.json"), &to_json(&pair))?;
    write_text(&out.join("action.json"), &to_json(&action))?;
    log::info!("wrote {}", out.display());
    Ok(Outcome::new(to_json(&json!({ "kind": ex.kind, "meta": ex.meta, "dir": out })), true))
}

fn ball(action: &Path, radius: u32) -> Result<Outcome> {
    let a = read_json::<ActionFile>(action)?.build()?;
    let b = a.ball(radius);
    let words: Vec<String> = b.elements.iter().map(|e| b.render(&e.word)).collect();
    Ok(Outcome::new(
        to_json(
            &json!({ "radius": radius, "truncated": b.truncated, "elements": words.len(), "words": words, "merges": b.merges }),
        ),
        true,
    ))
}

fn invariance(pair: &LoadedPair, depth: u32) -> (Vec<Value>, bool) {
    let Some(action) = &pair.action else {
        return (Vec::new(), true);
    };
    let mut rows = Vec::new();
    let mut pass = true;
    for (name, g) in action.names.iter().zip(&action.generators) {
        for lam in [&pair.plus, &pair.minus] {
            let report = check_invariance(lam, g, depth);
            pass &= matches!(report, InvarianceReport::Ok { .. });
            rows.push(json!({ "generator": name, "sign": lam.sign, "report": report }));
        }
    }
    (rows, pass)
}

fn verify(pair: &Path, action: Option<&Path>, depth: u32, radius: u32, arc: &str) -> Result<Outcome> {
    let p = LoadedPair::load(pair, action)?;
    let g = p.action_or_trivial();
    let tol = NearTolerance::new(rational(arc)?);
    let (inv, inv_pass) = invariance(&p, depth);
    let bifoliar = bifoliar_report(&p.plus, &p.minus, depth)?;
    let anosov = anosov_like_report(&g, &p.plus, &p.minus, depth, radius)?;
    let flowable = flowable_report(&g, &p.plus, &p.minus, depth, radius, &tol)?;
    let pass = inv_pass && overall(&bifoliar) && overall(&flowable);
    Ok(Outcome::new(
        to_json(&json!({
            "depth": depth,
            "radius": radius,
            "invariance": inv,
            "bifoliar": bifoliar,
            "anosov_like": anosov,
            "flowable": flowable,
            "flowable_overall": overall(&flowable),
            "pass": pass,
        })),
        pass,
    ))
}

fn plane(pair: &Path, action: Option<&Path>, depth: u32) -> Result<Outcome> {
    let p = LoadedPair::load(pair, action)?;
    let plane = build_plane(&p.plus, &p.minus, depth)?;
    Ok(Outcome::new(to_json(&PlaneFile { source: p.file, depth, plane }), true))
}

fn flow(path: &Path, action: Option<&Path>, depth: Option<u32>, radius: u32, seed: u64) -> Result<Outcome> {
    let pf: PlaneFile = read_json(path)?;
    let p = LoadedPair::from_file(pf.source, path, action)?;
    let g = p.action_or_trivial();
    let depth = depth.unwrap_or(pf.depth);
    let params = FlowParams { radius, ..FlowParams::new(depth, seed) };
    let report = build_flow(&pf.plane, &p.plus, &p.minus, &g, &params)?;
    let pass = !report.freeness.is_witness() && report.singular.iter().all(|s| s.checks.all_pass());
    let file = FlowFile {
        source: p.file,
        action: ActionFile::from_action(&g),
        depth,
        seed,
        flow: serde_json::to_value(&report)?,
    };
    Ok(Outcome::new(to_json(&file), pass))
}

fn certify_flow(path: &Path, depth: Option<u32>, radius: u32, eps: &str, horizon: usize) -> Result<Outcome> {
    let ff: FlowFile = read_json(path)?;
    let action = Arc::new(ff.action.build()?);
    let (plus, minus) = ff.source.build(Some(&action))?;
    let params = CertifyParams::new(depth.unwrap_or(ff.depth), radius, rational(eps)?, horizon);
    let cert = certify(&plus, &minus, &action, &params)?;
    let pass = cert.all_hold();
    Ok(Outcome::new(to_json(&cert), pass))
}

fn boundary(pair: &Path, action: Option<&Path>, depth: u32, radius: u32) -> Result<Outcome> {
    let p = LoadedPair::load(pair, action)?;
    let g: Arc<GroupAction> = p.action_or_trivial();
    let report = ideal_boundary(&p.plus, &p.minus, &g, depth, radius)?;
    let pass = !report.unlinked.is_fail()
        && !report.equivariant.is_fail()
        && !matches!(report.triples, TripleCheck::Collision { .. });
    Ok(Outcome::new(to_json(&report), pass))
}

fn render_file(input: &Path, action: Option<&Path>, depth: Option<u32>) -> Result<Outcome> {
    let raw: Value = read_json(input)?;
    let (pair, slits, default_depth) = if raw.get("plane").is_some() {
        let pf: PlaneFile = serde_json::from_value(raw).map_err(|e| ForgeError::Parse(e.to_string()))?;
        let slits: Vec<_> = pf.plane.slits.iter().flat_map(|s| s.cells.iter().cloned()).collect();
        (LoadedPair::from_file(pf.source, input, action)?, slits, pf.depth)
    } else {
        let file = serde_json::from_value(raw).map_err(|e| ForgeError::Parse(e.to_string()))?;
        (LoadedPair::from_file(file, input, action)?, Vec::new(), 3)
    };
    let depth = depth.unwrap_or(default_depth);
    let mut scene = Scene::from_pair(pair.plus.enumerate(depth).to_vec(), pair.minus.enumerate(depth).to_vec());
    scene.slits = slits;
    Ok(Outcome { text: render(&scene), pass: true })
}

fn fried(slope: &str, locus: &str) -> Result<Outcome> {
    let (s, l): (Slope, Slope) = (slope.parse()?, locus.parse()?);
    let distance = slope_distance(&s, &l);
    Ok(match surgery_prong(&s, &l) {
        Ok(orbit) => Outcome::new(
            to_json(
                &json!({ "slope": s.to_string(), "locus": l.to_string(), "distance": distance, "admissible": true, "result": orbit }),
            ),
            true,
        ),
        Err(e) => Outcome::new(
            to_json(
                &json!({ "slope": s.to_string(), "locus": l.to_string(), "distance": distance, "admissible": false, "reason": e.to_string() }),
            ),
            false,
        ),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(write_text(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (outcome, out) = match &cli.command {
        Command::Gen { kind, out, matrix, sides, mutated } => {
            if matrix.len() != 4 {
                bail!("--matrix takes four entries");
            }
            (gen(*kind, out, matrix, *sides, *mutated)?, None)
        }
        Command::Ball { action, radius, out } => (ball(action, *radius)?, out.as_deref()),
        Command::Verify { pair, action, depth, radius, arc, out } => {
            (verify(pair, action.as_deref(), *depth, *radius, arc)?, out.as_deref())
        }
        Command::Plane { pair, action, depth, out } => (plane(pair, action.as_deref(), *depth)?, out.as_deref()),
        Command::Flow { plane, action, depth, radius, seed, out } => {
            (flow(plane, action.as_deref(), *depth, *radius, *seed)?, out.as_deref())
        }
        Command::Certify { flow, depth, radius, eps, horizon, out } => {
            (certify_flow(flow, *depth, *radius, eps, *horizon)?, out.as_deref())
        }
        Command::Boundary { pair, action, depth, radius, out } => {
            (boundary(pair, action.as_deref(), *depth, *radius)?, out.as_deref())
        }
        Command::Render { input, action, depth, out } => {
            (render_file(input, action.as_deref(), *depth)?, out.as_deref())
        }
        Command::Fried { slope, locus, out } => (fried(slope, locus)?, out.as_deref()),
    };
    emit(out, &outcome.text)?;
    if !outcome.pass {
        log::warn!("checks failed; see the witness in the output");
    }
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
