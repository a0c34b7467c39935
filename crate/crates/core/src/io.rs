//! JSON files exchanged between pipeline stages.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::action::{CircleHomeo, GroupAction, Mobius};
use crate::circle::{CirclePoint, QuadraticNumber as Qn};
use crate::error::{ForgeError, Result};
use crate::gallery::Example;
use crate::lamination::{check_laminar, AlmostLamination, Leaf, Oracle, Sign};
use crate::plane::PlaneApprox;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaminationFile {
    pub sign: Sign,
    pub field_d: u64,
    pub leaves: Vec<[CirclePoint; 2]>,
    #[serde(default)]
    pub removed_sides: Vec<[CirclePoint; 2]>,
    /// Path of an action file, relative to the pair file, whose orbits
    /// enumerate the lamination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Oracle>,
}

fn field_of(points: impl IntoIterator<Item = CirclePoint>, declared: u64) -> Result<()> {
    for p in points {
        let d = p.field();
        if d != 0 && d != declared {
            return Err(ForgeError::FieldMismatch(declared, d));
        }
    }
    Ok(())
}

fn chords(leaves: &[Leaf]) -> Vec<[CirclePoint; 2]> {
    leaves.iter().map(|l| [l.lo().clone(), l.hi().clone()]).collect()
}

impl LaminationFile {
    pub fn from_lamination(l: &AlmostLamination, field_d: u64, generator: Option<&str>) -> Self {
        LaminationFile {
            sign: l.sign,
            field_d: field_d.max(l.field_d),
            leaves: chords(&l.seeds),
            removed_sides: chords(&l.removed_sides),
            generator: l.action().and(generator).map(str::to_string),
            oracle: Some(l.oracle.clone()).filter(|o| *o != Oracle::Explicit),
        }
    }

    fn leaves_of(&self, raw: &[[CirclePoint; 2]]) -> Result<Vec<Leaf>> {
        field_of(raw.iter().flatten().cloned(), self.field_d)?;
        raw.iter().map(|[a, b]| Leaf::new(a.clone(), b.clone(), self.sign)).collect()
    }

    /// Builds the lamination, attaching `action` when a generator is named.
    pub fn build(&self, expected: Sign, action: Option<&Arc<GroupAction>>) -> Result<AlmostLamination> {
        if self.sign != expected {
            return Err(ForgeError::Parse(format!(
                "expected sign {} but found {}",
                expected.symbol(),
                self.sign.symbol()
            )));
        }
        let seeds = self.leaves_of(&self.leaves)?;
        check_laminar(&seeds)?;
        let removed = self.leaves_of(&self.removed_sides)?;
        let oracle = self.oracle.clone().unwrap_or(Oracle::Explicit);
        let lam = AlmostLamination::with_oracle(self.sign, seeds, oracle).with_removed(removed);
        match (&self.generator, action) {
            (Some(_), Some(a)) => Ok(lam.with_action(a.clone())),
            (Some(g), None) => {
                Err(ForgeError::Precondition(format!("lamination names generator {g:?} but no action was given")))
            }
            (None, _) => Ok(lam),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairFile {
    pub plus: LaminationFile,
    pub minus: LaminationFile,
}

impl PairFile {
    pub fn build(&self, action: Option<&Arc<GroupAction>>) -> Result<(AlmostLamination, AlmostLamination)> {
        Ok((self.plus.build(Sign::Plus, action)?, self.minus.build(Sign::Minus, action)?))
    }

    /// The generator path named by either lamination.
    pub fn generator(&self) -> Option<&str> {
        self.plus.generator.as_deref().or(self.minus.generator.as_deref())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorFile {
    pub name: String,
    pub pieces: Vec<(CirclePoint, [[Qn; 2]; 2])>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionFile {
    pub field_d: u64,
    pub generators: Vec<GeneratorFile>,
}

impl ActionFile {
    pub fn from_action(a: &GroupAction) -> Self {
        let generators = a
            .names
            .iter()
            .zip(&a.generators)
            .map(|(name, g)| GeneratorFile {
                name: name.clone(),
                pieces: g
                    .pieces()
                    .into_iter()
                    .map(|(b, m)| (b, [[m.p.clone(), m.q.clone()], [m.r.clone(), m.s.clone()]]))
                    .collect(),
            })
            .collect();
        ActionFile { field_d: a.field_d, generators }
    }

    pub fn build(&self) -> Result<GroupAction> {
        let mut names = Vec::new();
        let mut maps = Vec::new();
        for g in &self.generators {
            if names.contains(&g.name) {
                return Err(ForgeError::Parse(format!("generator {:?} declared twice", g.name)));
            }
            for (b, m) in &g.pieces {
                field_of(std::iter::once(b.clone()), self.field_d)?;
                field_of(m.iter().flatten().map(|x| CirclePoint::new(x.clone())), self.field_d)?;
            }
            let raw = g
                .pieces
                .iter()
                .map(|(b, [[p, q], [r, s]])| (b.clone(), Mobius::new(p.clone(), q.clone(), r.clone(), s.clone())));
            maps.push(CircleHomeo::from_pieces(raw.collect())?);
            names.push(g.name.clone());
        }
        Ok(GroupAction::new(self.field_d, names, maps))
    }
}

/// Pair and action files for a gallery example; laminations enumerated by
/// the action point at `action_path`.
pub fn example_files(ex: &Example, action_path: &str) -> (PairFile, ActionFile) {
    let d = ex.action.field_d;
    let pair = PairFile {
        plus: LaminationFile::from_lamination(&ex.plus, d, Some(action_path)),
        minus: LaminationFile::from_lamination(&ex.minus, d, Some(action_path)),
    };
    (pair, ActionFile::from_action(&ex.action))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlaneFile {
    pub source: PairFile,
    pub depth: u32,
    pub plane: PlaneApprox,
}

/// The flow stage output. The report itself is kept as raw JSON; later
/// stages only need the embedded inputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowFile {
    pub source: PairFile,
    pub action: ActionFile,
    pub depth: u32,
    pub seed: u64,
    pub flow: serde_json::Value,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| ForgeError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ForgeError::Parse(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| ForgeError::Io(format!("{}: {e}", path.display())))
}

/// Resolves a generator path relative to the file that names it.
pub fn relative_to(file: &Path, target: &str) -> PathBuf {
    match file.parent() {
        Some(dir) if Path::new(target).is_relative() => dir.join(target),
        _ => PathBuf::from(target),
    }
}

/// The action given explicitly, else the one named by the pair's generator
/// path, resolved relative to `file`.
pub fn resolve_action(pair: &PairFile, file: &Path, action: Option<&Path>) -> Result<Option<Arc<GroupAction>>> {
    let path = match (action, pair.generator()) {
        (Some(a), _) => a.to_path_buf(),
        (None, Some(g)) => relative_to(file, g),
        (None, None) => return Ok(None),
    };
    Ok(Some(Arc::new(read_json::<ActionFile>(&path)?.build()?)))
}

/// A pair file with its laminations built.
pub struct LoadedPair {
    pub file: PairFile,
    pub action: Option<Arc<GroupAction>>,
    pub plus: AlmostLamination,
    pub minus: AlmostLamination,
}

impl LoadedPair {
    pub fn from_file(file: PairFile, origin: &Path, action: Option<&Path>) -> Result<Self> {
        let action = resolve_action(&file, origin, action)?;
        let (plus, minus) = file.build(action.as_ref())?;
        Ok(LoadedPair { file, action, plus, minus })
    }

    pub fn load(path: &Path, action: Option<&Path>) -> Result<Self> {
        Self::from_file(read_json(path)?, path, action)
    }

    /// The attached action, or the trivial group when there is none.
    pub fn action_or_trivial(&self) -> Arc<GroupAction> {
        self.action.clone().unwrap_or_else(|| Arc::new(GroupAction::trivial()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    #[test]
    fn cat_map_files_round_trip() {
        let ex = gallery::cat_map_suspension([[2, 1], [1, 1]]).unwrap();
        let (pair, action) = example_files(&ex, "action.json");
        let pair2: PairFile = serde_json::from_str(&to_json(&pair)).unwrap();
        let action2: ActionFile = serde_json::from_str(&to_json(&action)).unwrap();
        assert_eq!(pair, pair2);
        let built = Arc::new(action2.build().unwrap());
        assert_eq!(ActionFile::from_action(&built), action);
        let (plus, minus) = pair2.build(Some(&built)).unwrap();
        assert_eq!(plus.enumerate(2).as_slice(), ex.plus.enumerate(2).as_slice());
        assert_eq!(minus.enumerate(2).as_slice(), ex.minus.enumerate(2).as_slice());
    }

    #[test]
    fn explicit_pair_needs_no_action() {
        let (pair, _) = example_files(&gallery::square_pair(), "action.json");
        let (plus, _) = pair.build(None).unwrap();
        assert_eq!(plus.seeds.len(), 4);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let qn = |a: &str| format!(r#"{{"a":"{a}","b":"0","d":0}}"#);
        let lam = |sign: &str, a: &str, b: &str| {
            format!(r#"{{"sign":"{sign}","field_d":0,"leaves":[[{},{}]],"removed_sides":[]}}"#, qn(a), qn(b))
        };
        let parse = |p: &str, m: &str| serde_json::from_str::<PairFile>(&format!(r#"{{"plus":{p},"minus":{m}}}"#));
        let ok = parse(&lam("+", "0", "1/2"), &lam("-", "1/4", "3/4")).unwrap();
        assert!(ok.build(None).is_ok());
        let swapped = parse(&lam("-", "0", "1/2"), &lam("-", "1/4", "3/4")).unwrap();
        assert!(matches!(swapped.build(None), Err(ForgeError::Parse(_))));
        let degenerate = parse(&lam("+", "0", "0"), &lam("-", "1/4", "3/4")).unwrap();
        assert!(degenerate.build(None).is_err());
        let two = r#"{"sign":"+","field_d":0,"leaves":[[{"a":"0","b":"0","d":0},{"a":"1/2","b":"0","d":0}],[{"a":"1/4","b":"0","d":0},{"a":"3/4","b":"0","d":0}]]}"#;
        let linked = parse(two, &lam("-", "1/8", "3/8")).unwrap();
        assert!(matches!(linked.build(None), Err(ForgeError::NotLaminar(..))));
        let mixed = r#"{"sign":"+","field_d":2,"leaves":[[{"a":"0","b":"1/8","d":5},{"a":"1/2","b":"0","d":0}]]}"#;
        assert!(matches!(
            parse(mixed, &lam("-", "1/8", "3/8")).unwrap().build(None),
            Err(ForgeError::FieldMismatch(2, 5))
        ));
    }
}
