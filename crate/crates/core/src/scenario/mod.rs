//! Declarative scenario documents (TOML, `version = 1`) and their
//! translation into validated measure systems, direct integrals and
//! operators.

pub mod random;
pub mod run;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::algebra::AlgebraError;
use crate::fiber::{validate_filtration, FiberCandidate, FiberError};
use crate::integral::{DirectIntegralSpace, IntegralError};
use crate::linalg::CMatrix;
use crate::measure::{
    AtomSet, ExtendedReal, FiniteMeasurableSpace, InductiveMeasureSystem, LevelData, LocallyMeasureSpace,
    MeasureError, MeasureTable, WeightMode,
};
use crate::operator::{
    assemble_decomposable, assemble_diagonalizable, DecomposableForm, DiagonalSymbol, LocalOperator, OperatorError,
};
use crate::poset::{DirectedPoset, PosetError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Poset(#[from] PosetError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Integral(#[from] IntegralError),
    #[error("operator `{name}`: {source}")]
    Operator { name: String, source: OperatorError },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

impl ScenarioError {
    /// Errors raised before any module-level validation runs.
    pub fn is_parse_error(&self) -> bool {
        matches!(self, ScenarioError::Parse { .. } | ScenarioError::SchemaViolation(_) | ScenarioError::Io { .. })
    }
}

fn schema(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::SchemaViolation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub poset: PosetBlock,
    pub measure: MeasureBlock,
    #[serde(default)]
    pub fibers: BTreeMap<String, FiberBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub operators: Vec<OperatorBlock>,
    #[serde(default)]
    pub checks: ChecksBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosetBlock {
    pub levels: Vec<String>,
    #[serde(default)]
    pub relations: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureBlock {
    #[serde(default)]
    pub mode: WeightMode,
    /// Every atom of `X`, in coordinate order.
    pub atoms: Vec<String>,
    pub levels: BTreeMap<String, LevelBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaKind {
    #[default]
    PowerSet,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelBlock {
    pub atoms: Vec<String>,
    #[serde(default)]
    pub sigma: SigmaKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generators: Vec<Vec<String>>,
    /// Atom weights (power-set levels).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, String>,
    /// Values on measurable sets (any level).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub set_weights: Vec<SetWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetWeight {
    pub set: Vec<String>,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient: Option<usize>,
    pub dims: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Dense,
    Decomposable,
    Diagonal,
}

/// A complex number written `[re, im]`.
pub type Entry = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorBlock {
    pub name: String,
    pub kind: OperatorKind,
    /// Dense: rows of the global matrix.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<Vec<Entry>>,
    /// Decomposable: rows of each fiber block.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub blocks: BTreeMap<String, Vec<Vec<Entry>>>,
    /// Diagonal: the symbol on each atom.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, Entry>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksBlock {
    #[serde(default = "yes")]
    pub theorems: bool,
    #[serde(default = "yes")]
    pub invariants: bool,
    #[serde(default = "yes")]
    pub operators: bool,
}

impl Default for ChecksBlock {
    fn default() -> Self {
        Self { theorems: true, invariants: true, operators: true }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and structurally checks a scenario document.
pub fn parse_str(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ScenarioError::Parse { line, column, message: e.message().to_string() }
    })?;
    scenario.check_schema()?;
    Ok(scenario)
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_str(&text)
}

/// Canonical TOML text; `parse_str(&emit(s)) == s`.
pub fn emit(scenario: &Scenario) -> String {
    toml::to_string(scenario).expect("scenario serializes")
}

/// The validated objects a scenario describes.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub space: Arc<DirectIntegralSpace>,
    pub operators: Vec<(String, LocalOperator)>,
}

impl Scenario {
    /// SHA-256 of the canonical text.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(emit(self).as_bytes()))
    }

    /// Reference and syntax checks that need no mathematics.
    pub fn check_schema(&self) -> Result<(), ScenarioError> {
        if self.version != SCHEMA_VERSION {
            return Err(schema(format!("unsupported version {} (expected {SCHEMA_VERSION})", self.version)));
        }
        let levels: BTreeSet<&str> = self.poset.levels.iter().map(String::as_str).collect();
        for (lo, hi) in &self.poset.relations {
            for l in [lo, hi] {
                if !levels.contains(l.as_str()) {
                    return Err(schema(format!("relation refers to undeclared level `{l}`")));
                }
            }
        }
        let atoms: BTreeSet<&str> = self.measure.atoms.iter().map(String::as_str).collect();
        if atoms.len() != self.measure.atoms.len() {
            return Err(schema("duplicate atom name"));
        }
        let known_atom = |a: &str, ctx: &str| {
            if atoms.contains(a) {
                Ok(())
            } else {
                Err(schema(format!("{ctx} refers to undeclared atom `{a}`")))
            }
        };
        for (name, lvl) in &self.measure.levels {
            if !levels.contains(name.as_str()) {
                return Err(schema(format!("measure given for undeclared level `{name}`")));
            }
            let ctx = format!("level `{name}`");
            for a in &lvl.atoms {
                known_atom(a, &ctx)?;
            }
            let ground: BTreeSet<&str> = lvl.atoms.iter().map(String::as_str).collect();
            for g in &lvl.generators {
                for a in g {
                    known_atom(a, &ctx)?;
                }
            }
            if lvl.sigma == SigmaKind::PowerSet && !lvl.generators.is_empty() {
                return Err(schema(format!("{ctx}: generators given for a power-set sigma-algebra")));
            }
            if !lvl.weights.is_empty() && !lvl.set_weights.is_empty() {
                return Err(schema(format!("{ctx}: give either weights or set_weights")));
            }
            if lvl.sigma == SigmaKind::Generated && !lvl.weights.is_empty() {
                return Err(schema(format!("{ctx}: generated sigma-algebras take set_weights")));
            }
            for (a, w) in &lvl.weights {
                known_atom(a, &ctx)?;
                if !ground.contains(a.as_str()) {
                    return Err(schema(format!("{ctx}: weight on atom `{a}` outside the level")));
                }
                ExtendedReal::parse(w, self.measure.mode).map_err(|e| schema(format!("{ctx}: {e}")))?;
            }
            for sw in &lvl.set_weights {
                for a in &sw.set {
                    known_atom(a, &ctx)?;
                }
                ExtendedReal::parse(&sw.value, self.measure.mode).map_err(|e| schema(format!("{ctx}: {e}")))?;
            }
        }
        for (atom, fiber) in &self.fibers {
            known_atom(atom, "fiber")?;
            for l in fiber.dims.keys() {
                if !levels.contains(l.as_str()) {
                    return Err(schema(format!("fiber `{atom}` refers to undeclared level `{l}`")));
                }
            }
        }
        let mut names = BTreeSet::new();
        for op in &self.operators {
            if !names.insert(op.name.as_str()) {
                return Err(schema(format!("duplicate operator `{}`", op.name)));
            }
            let ctx = format!("operator `{}`", op.name);
            let (dense, blocks, values) = (!op.entries.is_empty(), !op.blocks.is_empty(), !op.values.is_empty());
            let ok = match op.kind {
                OperatorKind::Dense => !blocks && !values,
                OperatorKind::Decomposable => !dense && !values,
                OperatorKind::Diagonal => !dense && !blocks,
            };
            if !ok {
                return Err(schema(format!("{ctx}: fields do not match kind {:?}", op.kind)));
            }
            for a in op.blocks.keys().chain(op.values.keys()) {
                known_atom(a, &ctx)?;
            }
        }
        Ok(())
    }

    fn atom_set(&self, atoms: &[String]) -> AtomSet {
        let index: BTreeMap<&str, usize> =
            self.measure.atoms.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        AtomSet::from_atoms(atoms.iter().map(|a| index[a.as_str()]))
    }

    /// Validates the poset and the measure system.
    pub fn build_system(&self) -> Result<InductiveMeasureSystem, ScenarioError> {
        self.check_schema()?;
        let poset = DirectedPoset::validate(&self.poset.levels, &self.poset.relations)?;
        let mode = self.measure.mode;
        let mut levels = Vec::with_capacity(poset.len());
        for level in poset.levels() {
            let name = poset.name(level);
            let block = self
                .measure
                .levels
                .get(name)
                .ok_or_else(|| MeasureError::MissingLevel(name.to_string()))?;
            let ground = self.atom_set(&block.atoms);
            let space = match block.sigma {
                SigmaKind::PowerSet => FiniteMeasurableSpace::power_set(ground),
                SigmaKind::Generated => {
                    let gens: Vec<AtomSet> = block.generators.iter().map(|g| self.atom_set(g)).collect();
                    if let Some(g) = gens.iter().find(|g| !g.is_subset(ground)) {
                        return Err(MeasureError::GeneratorOutsideGround {
                            level: name.to_string(),
                            set: format!(
                                "{{{}}}",
                                g.iter().map(|a| self.measure.atoms[a].as_str()).collect::<Vec<_>>().join(",")
                            ),
                        }
                        .into());
                    }
                    FiniteMeasurableSpace::generated(ground, &gens)
                }
            };
            let parse = |w: &str| ExtendedReal::parse(w, mode).map_err(|e| schema(e.to_string()));
            let table = if block.set_weights.is_empty() {
                let mut ws = Vec::new();
                for (a, w) in &block.weights {
                    ws.push((self.atom_set(std::slice::from_ref(a)).iter().next().unwrap(), parse(w)?));
                }
                ws.sort_by_key(|(a, _)| *a);
                MeasureTable::AtomWeights(ws)
            } else {
                let mut vs = Vec::new();
                for sw in &block.set_weights {
                    vs.push((self.atom_set(&sw.set), parse(&sw.value)?));
                }
                MeasureTable::SetValues(vs)
            };
            levels.push(LevelData { space, table });
        }
        Ok(InductiveMeasureSystem::validate(poset, self.measure.atoms.clone(), mode, levels)?)
    }

    /// Validates everything and assembles the named operators.
    pub fn build(&self) -> Result<BuiltScenario, ScenarioError> {
        let system = self.build_system()?;
        let poset = system.poset().clone();
        let candidates: Vec<Option<FiberCandidate>> = self
            .measure
            .atoms
            .iter()
            .map(|a| {
                self.fibers.get(a).map(|f| FiberCandidate {
                    ambient: f.ambient,
                    level_dims: poset.levels().map(|l| f.dims.get(poset.name(l)).copied()).collect(),
                })
            })
            .collect();
        let fibers = validate_filtration(&candidates, &system)?;
        let space = Arc::new(DirectIntegralSpace::build(LocallyMeasureSpace::new(system), fibers)?);
        let mut operators = Vec::with_capacity(self.operators.len());
        for op in &self.operators {
            let t = self.build_operator(&space, op).map_err(|source| ScenarioError::Operator {
                name: op.name.clone(),
                source,
            })?;
            operators.push((op.name.clone(), t));
        }
        Ok(BuiltScenario { space, operators })
    }

    fn build_operator(&self, space: &Arc<DirectIntegralSpace>, op: &OperatorBlock) -> Result<LocalOperator, OperatorError> {
        let cx = |e: &Entry| Complex64::new(e[0], e[1]);
        let matrix = |rows: &[Vec<Entry>], n: usize| -> Result<CMatrix, OperatorError> {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(OperatorError::ShapeMismatch { expected: n, got: rows.len() });
            }
            Ok(CMatrix::from_fn(n, n, |i, j| cx(&rows[i][j])))
        };
        let index = |name: &str| self.measure.atoms.iter().position(|a| a == name).expect("schema-checked");
        match op.kind {
            OperatorKind::Dense => LocalOperator::validate(space.clone(), matrix(&op.entries, space.dim())?),
            OperatorKind::Decomposable => {
                let mut blocks = vec![None; space.atom_count()];
                for (atom, rows) in &op.blocks {
                    let a = index(atom);
                    blocks[a] = Some(matrix(rows, space.fiber(a).ambient_dim)?);
                }
                for a in 0..space.atom_count() {
                    if space.is_null_atom(a) {
                        blocks[a] = None;
                    }
                }
                assemble_decomposable(space.clone(), &DecomposableForm { blocks })
            }
            OperatorKind::Diagonal => {
                let mut values = vec![None; space.atom_count()];
                for (atom, v) in &op.values {
                    values[index(atom)] = Some(cx(v));
                }
                assemble_diagonalizable(space.clone(), &DiagonalSymbol { values })
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const S1: &str = r#"
version = 1
name = "S1"

[poset]
levels = ["a", "b"]
relations = [["a", "b"]]

[measure]
mode = "rational"
atoms = ["1", "2"]

[measure.levels.a]
atoms = ["1"]
weights = { "1" = "1" }

[measure.levels.b]
atoms = ["1", "2"]
weights = { "1" = "1", "2" = "2" }

[fibers."1"]
ambient = 2
dims = { a = 1, b = 2 }

[fibers."2"]
dims = { b = 1 }

[[operators]]
name = "T"
kind = "decomposable"
blocks = { "1" = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [2.0, 0.0]]], "2" = [[[3.0, 0.0]]] }
"#;

    #[test]
    fn s1_parses_and_builds() {
        let s = parse_str(S1).unwrap();
        assert_eq!(s.poset.levels.len(), 2);
        assert_eq!(s.measure.atoms.len(), 2);
        let built = s.build().unwrap();
        assert_eq!(built.space.dim(), 3);
        let t = &built.operators[0].1;
        assert_eq!(t.matrix(), &crate::linalg::real_diag(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn round_trip() {
        let s = parse_str(S1).unwrap();
        assert_eq!(parse_str(&emit(&s)).unwrap(), s);
        assert_eq!(s.digest(), parse_str(&emit(&s)).unwrap().digest());
    }

    #[test]
    fn negative_weight_is_schema_violation() {
        let text = S1.replace(r#""2" = "2""#, r#""2" = "-1""#);
        assert!(matches!(parse_str(&text), Err(ScenarioError::SchemaViolation(_))));
    }

    #[test]
    fn undeclared_level_in_fiber() {
        let text = S1.replace("dims = { b = 1 }", "dims = { b = 1, c = 1 }");
        let err = parse_str(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::SchemaViolation(ref m) if m.contains("`c`")), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_str("version = 1\n[poset\n").unwrap_err();
        match err {
            ScenarioError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn projectivity_failure_surfaces() {
        let text = S1.replace(r#"weights = { "1" = "1", "2" = "2" }"#, r#"weights = { "1" = "5", "2" = "2" }"#);
        let s = parse_str(&text).unwrap();
        assert!(matches!(s.build(), Err(ScenarioError::Measure(MeasureError::ProjectivityViolation { .. }))));
    }
}
